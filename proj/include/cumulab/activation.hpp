#pragma once

#include <string>
#include <vector>

#include "cumulab/data.hpp"

namespace cumulab {

/// sigma and its first three derivatives at one point.
struct ActivationValues {
  double s = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;
};

/// A thrice-differentiable link function with analytic derivatives.
class Activation {
 public:
  enum class Kind {
    neg_identity,      // -xi
    neg_tanh,          // -tanh(xi)
    scaled_neg_tanh,   // -tanh(a xi) / a
    smoothed_relu,     // log(1 + e^{beta xi}) / beta
    smoothed_relu_sq,  // (log(1 + e^{beta xi}) / beta)^2
    matched,           // score-matching link of the spiked cumulant model at time t
    polynomial,        // sum_k coeffs[k] xi^k
  };

  static Activation neg_identity();
  static Activation neg_tanh();
  static Activation scaled_neg_tanh(double a);
  static Activation smoothed_relu(double beta = 10.0);
  static Activation smoothed_relu_sq(double beta = 10.0);
  /// Throws std::domain_error at t = 0, where delta_t vanishes.
  static Activation matched(const DiffusionTime& dt);
  static Activation polynomial(std::vector<double> coeffs);

  /// Parses names like "neg_tanh", "scaled_neg_tanh:10", "smoothed_relu:10",
  /// "matched" (uses `dt`), "polynomial:0,1,0,-0.1".
  static Activation parse(const std::string& spec, const DiffusionTime& dt);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::string name() const;
  /// sigma(-xi) = -sigma(xi) for every xi.
  [[nodiscard]] bool is_odd() const;

  [[nodiscard]] ActivationValues eval(double xi) const;
  [[nodiscard]] double value(double xi) const;

 private:
  Activation(Kind k, double p0, double p1) : kind_(k), p0_(p0), p1_(p1) {}

  Kind kind_;
  double p0_ = 0.0;  // a, beta, or e^{-t}
  double p1_ = 0.0;  // e^{-t} / delta_t for matched
  std::vector<double> coeffs_;
};

/// sigma*_t(xi) = (e^{-t}/delta)(e^{-t} xi - tanh(xi e^{-t}/delta)); with w = v
/// the rank-1 denoiser equals the exact spiked-cumulant score.
double matched_sigma(const DiffusionTime& dt, double xi);

}  // namespace cumulab
