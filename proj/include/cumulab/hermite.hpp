#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cumulab/quadrature.hpp"
#include "cumulab/random.hpp"

namespace cumulab {

/// Monic probabilist's Hermite polynomial h_m(x) via h_{m+1} = x h_m - m h_{m-1}.
double hermite_eval(int m, double x);

/// h_0(x) .. h_{max_degree}(x) in one pass.
std::vector<double> hermite_values(int max_degree, double x);

/// Product Hermite tensor H_alpha(y) = prod_i h_{alpha_i}(y_i).
double hermite_tensor(std::span<const int> alpha, std::span<const double> y);

/// Unnormalized Hermite coefficients c_k = E[f(z) h_k(z)], k = 0..K.
/// f(z) is reconstructed as sum_k c_k / k! h_k(z).
struct HermiteSpectrum {
  std::vector<double> coeffs;
  double zero_tol = 1e-10;

  [[nodiscard]] int truncation_order() const { return static_cast<int>(coeffs.size()) - 1; }
  [[nodiscard]] double at(int k) const {
    return k >= 0 && k < static_cast<int>(coeffs.size()) ? coeffs[k] : 0.0;
  }
  /// |c_k| exceeds zero_tol relative to the largest coefficient magnitude.
  [[nodiscard]] bool is_nonzero(int k) const;
  [[nodiscard]] double reconstruct(double z) const;
};

/// Throws std::domain_error if f is non-finite at any quadrature node.
HermiteSpectrum hermite_coeffs(const std::function<double(double)>& f, int K,
                               const QuadratureConfig& q = {});

/// Smallest k >= 1 with c_k != 0.
std::optional<int> information_exponent(const HermiteSpectrum& s);

/// Smallest k >= 1 with c^L_k != 0 and c^F_{k-1} != 0.
std::optional<int> diffusion_information_exponent(const HermiteSpectrum& cL,
                                                  const HermiteSpectrum& cF);

/// A test function for the Gaussian integration-by-parts identity
/// E[H_alpha(y) f(y)] = E[d_alpha f(y)]. When `derivative` is empty the
/// mixed partial is taken by central finite differences with `fd_step`.
struct SteinFunction {
  std::function<double(std::span<const double>)> value;
  std::function<double(std::span<const double>, std::span<const int>)> derivative;
  double fd_step = 0.0;
};

struct SteinResult {
  double residual = 0.0;   // |mean of H_alpha f - d_alpha f|
  double std_error = 0.0;  // standard error of that paired mean
  std::size_t samples = 0;
};

/// Monte Carlo Stein residual over y ~ N(0, I_{|alpha|}). The two sides are
/// averaged on the same draws so the standard error is of their difference.
SteinResult stein_residual(const SteinFunction& f, std::span<const int> alpha,
                           std::size_t samples, Rng& rng);

/// Central finite-difference estimate of the mixed partial d_alpha f at y.
double finite_difference_partial(const std::function<double(std::span<const double>)>& f,
                                 std::span<const int> alpha, std::span<const double> y,
                                 double step);

struct HermiteAudit {
  double orthogonality = 0.0;  // max |E[h_m h_n] - n! delta_mn| / sqrt(m! n!)
  double recurrence = 0.0;     // max relative residual of the three-term recurrence
  double mehler = 0.0;         // max |E_g[h_k(a x + sqrt(1-a^2) g)] - a^k h_k(x)|
};

/// Orthogonality for m, n <= max_degree under a Gauss-Hermite rule with
/// `nodes` points. The recurrence is checked against the explicit sum formula
/// and the Mehler shift identity for k <= mehler_degree on x in [-2, 2].
HermiteAudit hermite_audit(int max_degree, int nodes, int mehler_degree, double a);

}  // namespace cumulab
