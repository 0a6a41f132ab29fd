#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cumulab/activation.hpp"
#include "cumulab/denoiser.hpp"
#include "cumulab/quadrature.hpp"
#include "cumulab/trainer.hpp"

namespace cumulab::oracle {

// For a clean point x0 with m = e^{-t} x0, the sample loss
// 0.5 ||-x - sigma(w.x) w + z / sqrt(delta)||^2 (skip b = 1) averaged over z
// depends on w only through zeta = w.z ~ N(0, |w|^2):
//   E[sigma(x_w) (w.m - c zeta) + 0.5 sigma(x_w)^2 |w|^2] + const,
// with x_w = w.m + sqrt(delta) zeta and c = e^{-2t} / sqrt(delta).
inline double z_averaged_loss(const Vector& w, const Vector& m, const Activation& act, const DiffusionTime& dt,
                              const QuadratureRule& rule) {
  const double rho = w.norm();
  const double wm = w.dot(m);
  const double sd = std::sqrt(dt.delta());
  const double c = dt.shrink() * dt.shrink() / sd;
  return rule.expect([&](double g) {
    const double zeta = rho * g;
    const double s = act.value(wm + sd * zeta);
    return s * (wm - c * zeta) + 0.5 * s * s * rho * rho;
  });
}

// E_z of a sample-gradient op at x = m + sqrt(delta) z. Components of z
// orthogonal to w enter linearly and average out, so only z along w is
// integrated.
inline Vector z_averaged_op(const Vector& w, const Vector& m, const DiffusionTime& dt, const QuadratureRule& rule,
                            const std::function<Vector(const Vector&)>& op) {
  const Vector what = w / w.norm();
  const double sd = std::sqrt(dt.delta());
  Vector acc = Vector::Zero(w.size());
  for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * op(m + sd * rule.nodes[i] * what);
  return acc;
}

inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& w, double h) {
  Vector g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vector a = w, b = w;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(a.norm(), b.norm());
}

// Contraction invariant at c2L = 0 by the reduced formula
// -E[sigma^2 + xi sigma sigma'] with xi ~ N(0, wnorm^2).
inline double lambda_reduced(const Activation& act, double wnorm, const QuadratureRule& rule) {
  return -rule.expect([&](double g) {
    const double xi = wnorm * g;
    const auto v = act.eval(xi);
    return v.s * v.s + xi * v.s * v.s1;
  });
}

}  // namespace cumulab::oracle
