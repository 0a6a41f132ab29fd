#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cumulab/activation.hpp"
#include "cumulab/data.hpp"
#include "cumulab/hermite.hpp"
#include "cumulab/trainer.hpp"

namespace cumulab {

/// Two-spike Hermite coefficients c_{ij} = E_{P_t}[h_i(x.u) h_j(x.v)] of the
/// noised MCM likelihood ratio, closed form, for i, j <= K.
Matrix likelihood_table(const McmParams& p, const DiffusionTime& dt, int K);

/// Direct quadrature of E[h_k(x_v)] under the noised Rademacher mixture
/// x_v = e^{-t} sqrt(beta_v) nu + sqrt(1 - e^{-2t} beta_v) g.
double cumulant_coeff_oracle(int k, double beta_v, const DiffusionTime& dt,
                             const QuadratureConfig& q = {});

struct C4Resolution {
  double t = 0.0;
  double oracle = 0.0;
  double cumulant_formula = 0.0;  // e^{-4t} - 3 e^{-2t}
  double semigroup = 0.0;      // -2 e^{-4t}
  std::string matches;         // "semigroup", "cumulant_formula", "both" or "neither"
};
C4Resolution resolve_c4(const DiffusionTime& dt, double tol = 1e-8);

enum class DriftForm { spherical, plain };

struct DriftPrediction {
  double alpha_u = 0.0;
  double alpha_v = 0.0;
  double wnorm = 1.0;
  /// Projections of the predicted mean descent direction on u, v and w/||w||.
  double along_u = 0.0;
  double along_v = 0.0;
  double along_w = 0.0;
  int K = 8;
};

/// Truncated population drift for w = alpha_u u + alpha_v v + w_perp with
/// ||w|| = wnorm. The plain form includes the radial G term and uses the
/// wnorm-dependent coefficients of F_tilde.
DriftPrediction predict_drift(const Matrix& cL, const Activation& act, double alpha_u,
                              double alpha_v, int K, DriftForm form, double wnorm = 1.0,
                              const QuadratureConfig& q = fine_trapezoid());

/// c_k of g -> F_tilde(wnorm g) divided by wnorm^k, i.e. E[d^k F_tilde(xi)].
std::vector<double> ftilde_derivative_moments(const Activation& act, double wnorm, int K,
                                              const QuadratureConfig& q = fine_trapezoid());
std::vector<double> g_derivative_moments(const Activation& act, double wnorm, int K,
                                         const QuadratureConfig& q = fine_trapezoid());

enum class Exec { serial, parallel };

struct PopulationGrad {
  Vector mean;
  double along_u = 0.0, along_v = 0.0, along_w = 0.0;
  double se_u = 0.0, se_v = 0.0, se_w = 0.0;
  std::size_t samples = 0;
};

/// Monte Carlo mean of the chosen sample-gradient op over fresh noised MCM
/// samples. Samples are drawn in fixed-size blocks with per-block seeds and
/// reduced in block order, so serial and parallel runs agree bit for bit.
PopulationGrad mc_population_grad(const Vector& w, const McmParams& p, const DiffusionTime& dt,
                                  const Activation& act, DriftForm form, std::size_t samples,
                                  std::uint64_t seed, Exec exec = Exec::parallel);

/// Block-parallel Monte Carlo per-coordinate loss of a rank-1 denoiser on fresh
/// noised MCM samples, with the same determinism guarantee.
struct LossEstimate {
  double mean = 0.0;
  double se = 0.0;
};
LossEstimate mc_population_loss(const DenoiserState& s, const McmParams& p, const DiffusionTime& dt,
                                const Activation& act, std::size_t samples, std::uint64_t seed,
                                Exec exec = Exec::parallel);

struct ContractionReport {
  bool pass = true;
  std::optional<std::size_t> first_violation;  // step of the first failing record
  std::string detail;
};

/// Checks |alpha_v| <= gamma^step |alpha_v(0)| + slack and
/// ||w|| <= delta^step ||w(0)|| + slack at every record.
ContractionReport contraction_check(const Trajectory& traj, double gamma_bar, double slack,
                                    std::optional<double> delta_bar = std::nullopt);

struct ScalingFit {
  std::vector<std::pair<double, double>> points;
  double exponent = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS of log-log residuals
};

/// Least-squares slope of log(time) on log(d). Throws if a time is missing or
/// fewer than three distinct d values are given.
ScalingFit scaling_fit(const std::vector<std::pair<double, std::optional<double>>>& pairs);

}  // namespace cumulab
