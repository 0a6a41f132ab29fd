#include "cumulab/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace cumulab {

namespace {

double log_cosh(double y) {
  const double a = std::abs(y);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

void require_positive_time(const DiffusionTime& dt, const char* what) {
  if (!(dt.delta() > 0.0)) throw std::domain_error(std::string(what) + ": undefined at t = 0");
}

}  // namespace

Vector denoise(const DenoiserState& s, const Activation& act, const Vector& x) {
  if (s.w.size() != x.size()) throw std::invalid_argument("denoise: dimension mismatch");
  return -s.skip_b * x - act.value(s.w.dot(x)) * s.w;
}

Vector exact_score_spiked(const Vector& x, const Vector& v, const DiffusionTime& dt) {
  require_positive_time(dt, "exact_score_spiked");
  const double e = dt.shrink();
  const double k = e / dt.delta();
  const double xv = x.dot(v);
  return -x - (k * (e * xv - std::tanh(k * xv))) * v;
}

double log_density_spiked(const Vector& x, const Vector& v, const DiffusionTime& dt) {
  require_positive_time(dt, "log_density_spiked");
  const double e = dt.shrink();
  const double D = dt.delta();
  const double xv = x.dot(v);
  const double perp2 = x.squaredNorm() - xv * xv;
  return -0.5 * perp2 - (xv * xv + e * e) / (2.0 * D) + log_cosh(e * xv / D);
}

EffectiveValues effective_nonlinearities(const Activation& act, double z, double wnorm,
                                         double skip_b) {
  const auto s = act.eval(z);
  const double r2 = wnorm * wnorm;
  EffectiveValues out;
  out.F = s.s2 - s.s1 * s.s - s.s - s.s1 * z;
  out.F_tilde = s.s2 * r2 - s.s1 * s.s * r2 - skip_b * s.s - skip_b * s.s1 * z;
  out.G = 2.0 * s.s1 - s.s * s.s;
  return out;
}

LambdaComponents lambda_invariant(const Activation& act, double c2L, double wnorm,
                                  const QuadratureConfig& q) {
  if (!(wnorm > 0.0)) throw std::invalid_argument("lambda_invariant: wnorm must be > 0");
  const QuadratureRule& rule = q.rule();
  const double r2 = wnorm * wnorm;
  LambdaComponents out;
  out.c2L = c2L;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double xi = wnorm * rule.nodes[i];
    const auto s = act.eval(xi);
    const double dF = s.s3 * r2 - (s.s1 * s.s1 + s.s * s.s2) * r2 - 2.0 * s.s1 - s.s2 * xi;
    const double G = 2.0 * s.s1 - s.s * s.s;
    if (!std::isfinite(dF) || !std::isfinite(G)) {
      throw std::domain_error("lambda_invariant: non-finite integrand");
    }
    out.c1_Ftilde += rule.weights[i] * dF;
    out.c0_G += rule.weights[i] * G;
  }
  out.lambda = (1.0 + c2L) * out.c1_Ftilde + out.c0_G;
  return out;
}

TiedAutoencoder TiedAutoencoder::random(std::size_t m, std::size_t d, double scale, Rng& rng) {
  TiedAutoencoder ae;
  ae.W.resize(m, d);
  const double sd = scale / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) ae.W(i, j) = sd * rng.gaussian();
  }
  ae.skip_alpha = 1.0;
  ae.bias = Vector::Zero(d);
  return ae;
}

Vector tied_forward(const TiedAutoencoder& ae, const Activation& act, const Vector& x) {
  if (ae.W.cols() != x.size() || ae.bias.size() != x.size()) {
    throw std::invalid_argument("tied_forward: dimension mismatch");
  }
  const Vector pre = ae.W * x;
  Vector h(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) h(i) = act.value(pre(i));
  return -ae.skip_alpha * x - ae.W.transpose() * h + ae.bias;
}

TiedGradient tied_sample_grad(const TiedAutoencoder& ae, const Activation& act, const Vector& x,
                              const Vector& target) {
  if (ae.W.cols() != x.size() || target.size() != x.size() || ae.bias.size() != x.size()) {
    throw std::invalid_argument("tied_sample_grad: dimension mismatch");
  }
  const Vector pre = ae.W * x;
  Vector h(pre.size());
  Vector dh(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    const auto s = act.eval(pre(i));
    h(i) = s.s;
    dh(i) = s.s1;
  }
  const Vector r = -ae.skip_alpha * x - ae.W.transpose() * h + ae.bias + target;
  TiedGradient g;
  g.loss = 0.5 * r.squaredNorm();
  const Vector Wr = ae.W * r;
  g.W = -h * r.transpose() - (dh.cwiseProduct(Wr)) * x.transpose();
  g.skip_alpha = -x.dot(r);
  g.bias = r;
  return g;
}

}  // namespace cumulab
