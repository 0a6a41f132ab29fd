#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace cumulab {

/// Nodes and weights for E_{z ~ N(0,1)}[f(z)] ~= sum_i weights[i] f(nodes[i]).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }

  template <class F>
  [[nodiscard]] double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

enum class QuadratureKind {
  gauss_hermite,  // exact for polynomials of degree <= 2n-1
  trapezoid,      // uniform grid on [-half_width, half_width]; for sharp analytic integrands
};

struct QuadratureConfig {
  QuadratureKind kind = QuadratureKind::gauss_hermite;
  int node_count = 200;
  double half_width = 12.0;  // trapezoid only

  [[nodiscard]] QuadratureConfig doubled() const;
  [[nodiscard]] const QuadratureRule& rule() const;
};

/// Default used for the contraction invariant and effective-nonlinearity moments.
QuadratureConfig fine_trapezoid(int node_count = 3201);

/// Probabilist's Gauss-Hermite rule. Nodes of the physicist's weight e^{-x^2}
/// are located by Golub-Welsch, polished by Newton on the orthonormal
/// recurrence, and mapped by z = sqrt(2) x, w -> w / sqrt(pi).
QuadratureRule gauss_hermite_rule(int node_count);

/// Trapezoid rule against the standard normal density, renormalized to sum 1.
QuadratureRule gaussian_trapezoid_rule(int node_count, double half_width);

}  // namespace cumulab
