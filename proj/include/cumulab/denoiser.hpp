#pragma once

#include "cumulab/activation.hpp"
#include "cumulab/data.hpp"
#include "cumulab/quadrature.hpp"

namespace cumulab {

/// Rank-1 autoencoder with a linear skip: S(x) = -skip_b x - sigma(w.x) w.
struct DenoiserState {
  Vector w;
  double skip_b = 1.0;
};

Vector denoise(const DenoiserState& s, const Activation& act, const Vector& x);

/// Score of the noised spiked-cumulant law (beta_u = 0, beta_v = 1) along unit v.
/// Throws std::domain_error at t = 0.
Vector exact_score_spiked(const Vector& x, const Vector& v, const DiffusionTime& dt);

/// log P_t(x) up to an additive constant for the same law. Used as a
/// finite-difference reference for the score.
double log_density_spiked(const Vector& x, const Vector& v, const DiffusionTime& dt);

/// The three scalar functions that drive SGD after Stein reduction of the noise.
struct EffectiveValues {
  double F = 0.0;       // F_tilde at wnorm = 1, skip_b = 1
  double F_tilde = 0.0;
  double G = 0.0;
};

/// F_tilde = sigma'' r^2 - sigma' sigma r^2 - b sigma - b sigma' z and
/// G = 2 sigma' - sigma^2, all evaluated at z with r = wnorm.
EffectiveValues effective_nonlinearities(const Activation& act, double z, double wnorm,
                                         double skip_b = 1.0);

struct LambdaComponents {
  double c1_Ftilde = 0.0;  // E[F_tilde'(xi)], xi ~ N(0, wnorm^2)
  double c0_G = 0.0;       // E[G(xi)]
  double c2L = 0.0;
  double lambda = 0.0;     // (1 + c2L) c1_Ftilde + c0_G
};

/// Contraction invariant. The default rule is a fine Gaussian-weighted
/// trapezoid, since Gauss-Hermite mis-resolves sharp links like tanh(10 xi).
LambdaComponents lambda_invariant(const Activation& act, double c2L, double wnorm,
                                  const QuadratureConfig& q = fine_trapezoid());

/// S(x) = -skip_alpha x - W^T sigma(W x) + bias, W is m x d.
struct TiedAutoencoder {
  Matrix W;
  double skip_alpha = 1.0;
  Vector bias;

  /// Rows drawn i.i.d. N(0, scale^2 / d), zero bias.
  static TiedAutoencoder random(std::size_t m, std::size_t d, double scale, Rng& rng);
};

Vector tied_forward(const TiedAutoencoder& ae, const Activation& act, const Vector& x);

struct TiedGradient {
  Matrix W;
  double skip_alpha = 0.0;
  Vector bias;
  double loss = 0.0;  // 0.5 ||S(x) + target||^2
};

/// Gradient of 0.5 ||S(x) + target||^2 for one sample; target is z / sqrt(delta).
TiedGradient tied_sample_grad(const TiedAutoencoder& ae, const Activation& act, const Vector& x,
                              const Vector& target);

}  // namespace cumulab
