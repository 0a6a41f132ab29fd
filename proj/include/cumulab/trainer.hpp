#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cumulab/activation.hpp"
#include "cumulab/data.hpp"
#include "cumulab/denoiser.hpp"

namespace cumulab {

enum class TrainMode { projected, plain, adam };
enum class Spike { u, v };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  double eta = 1e-3;
  std::size_t steps = 1000;
  TrainMode mode = TrainMode::projected;
  std::size_t record_stride = 100;
  double recovery_threshold = 0.5;
  DiffusionTime dt = default_diffusion_time();
  std::uint64_t seed = 0;
  double init_norm = 1.0;       // plain mode only
  bool sign_condition = false;  // resample w0 until (v.w0)(u.w0) > 0
  bool train_skip = false;      // plain mode: also update skip_b
  /// Stop as soon as both |alpha_u| and |alpha_v| (or the one named by
  /// stop_on) have reached recovery_threshold. Empty means run to the end.
  std::string stop_on;

  void validate() const;
};

/// Thrown when the iterate or an overlap becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrajectoryRecord {
  std::size_t step = 0;
  double alpha_u = 0.0;
  double alpha_v = 0.0;
  double wnorm = 0.0;
  double skip_b = 1.0;
  std::vector<double> losses;  // one per evaluation set, if any
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  std::uint64_t samples_consumed = 0;
  Vector w_final;

  [[nodiscard]] double max_abs_alpha_u() const;
  [[nodiscard]] double max_abs_alpha_v() const;
};

/// Negative spherical gradient (I - w w^T) x F(x.w); w must be unit norm.
Vector spherical_grad_sample(const Vector& w, const Vector& x, const Activation& act);

/// Negative gradient x F_tilde(x.w, ||w||, b) + w G(x.w).
Vector plain_grad_sample(const Vector& w, const Vector& x, const Activation& act,
                         double skip_b = 1.0);

/// Negative derivative of the sample loss in the skip intensity b.
double skip_grad_sample(const Vector& w, const Vector& x, const Activation& act, double skip_b);

/// Uniform direction on the sphere, or conditioned on (v.w)(u.w) > 0.
Vector initial_direction(const McmParams& p, bool sign_condition, Rng& rng);

/// Unit vector with overlap `alpha` on the chosen spike and a uniformly random
/// component orthogonal to span(u, v).
Vector initial_with_overlap(const McmParams& p, Spike which, double alpha, Rng& rng);

/// Online SGD with one fresh noised MCM sample per step.
Trajectory train_online(const McmParams& p, const TrainConfig& cfg, const Activation& act);
/// Same, starting from the supplied w0 (rescaled to unit norm in projected mode).
Trajectory train_online(const McmParams& p, const TrainConfig& cfg, const Activation& act,
                        const Vector& w0);

/// Periodic per-coordinate loss evaluation on fixed clean datasets.
struct LossProbe {
  std::vector<const Dataset*> sets;
  std::size_t z_samples = 1;
  std::size_t every = 0;  // 0 disables; otherwise evaluated at these steps only
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam on (W, skip_alpha, bias) with fresh noised batches. Records the largest
/// normalized row overlap |W_i.u|/||W_i|| and |W_i.v|/||W_i||; wnorm holds the
/// largest row norm and skip_b holds skip_alpha.
Trajectory train_tied_adam(const McmParams& p, TiedAutoencoder ae, const TrainConfig& cfg,
                           const Activation& act, std::size_t batch, const LossProbe& probe = {},
                           const AdamConfig& adam = {});

/// 0.5 mean ||S(x0 e^{-t} + sqrt(delta) z) + z / sqrt(delta)||^2 / d over rows
/// of eval_set and z_samples fresh z per row.
double mc_loss(const DenoiserState& s, const Activation& act, const DiffusionTime& dt,
               const Dataset& eval_set, std::size_t z_samples, Rng& rng);
double mc_loss(const TiedAutoencoder& ae, const Activation& act, const DiffusionTime& dt,
               const Dataset& eval_set, std::size_t z_samples, Rng& rng);

/// First recorded step with |overlap| >= iota.
std::optional<std::size_t> weak_recovery_time(const Trajectory& traj, Spike which, double iota);

struct NoiseProbeReport {
  double directional_max = 0.0;  // max over grid of E[(grad H . v)^2]
  double fourth_max = 0.0;       // max over grid of E[||grad H||^4]
  double moment_max = 0.0;       // max over grid of E[||grad H||^{4+eps}]
  double epsilon = 0.5;
};

/// Moments of the spherical gradient noise grad H = g(x) - mean_x g(x) over a
/// grid of unit vectors. The mean is estimated from the same samples.
NoiseProbeReport noise_assumption_probe(const McmParams& p, const Activation& act,
                                        const DiffusionTime& dt,
                                        const std::vector<Vector>& w_grid, std::size_t mc,
                                        std::uint64_t seed, double epsilon = 0.5);

}  // namespace cumulab
