#include "cumulab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace cumulab {

namespace {

// Orthonormal (w.r.t. N(0,1)) probabilist's Hermite values p_0..p_{n} at x,
// returned as (p_{n-1}, p_n, sum_{k<n} p_k^2).
struct Orthonormal {
  double prev;
  double last;
  double sum_sq;
};

Orthonormal orthonormal_hermite(int n, double x) {
  double p_prev = 0.0;
  double p = 1.0;
  double sum_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    sum_sq += p * p;
    const double next = (x * p - std::sqrt(static_cast<double>(k)) * p_prev) /
                        std::sqrt(static_cast<double>(k + 1));
    p_prev = p;
    p = next;
  }
  return {p_prev, p, sum_sq};
}

}  // namespace

QuadratureRule gauss_hermite_rule(int node_count) {
  if (node_count < 1) throw std::invalid_argument("gauss_hermite_rule: node_count must be >= 1");
  const int n = node_count;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("gauss_hermite_rule: eigensolver failed");

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = solver.eigenvalues()(i);
    // Newton polish: p_n'(x) = sqrt(n) p_{n-1}(x) for the orthonormal family.
    for (int it = 0; it < 4; ++it) {
      const auto r = orthonormal_hermite(n, x);
      const double dp = std::sqrt(static_cast<double>(n)) * r.prev;
      if (!std::isfinite(r.last) || !std::isfinite(dp) || dp == 0.0) break;
      const double step = r.last / dp;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    const auto r = orthonormal_hermite(n, x);
    rule.nodes[i] = x;
    rule.weights[i] = std::isfinite(r.sum_sq) ? 1.0 / r.sum_sq : 0.0;
  }
  // Exploit symmetry so odd moments vanish to round-off.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gaussian_trapezoid_rule(int node_count, double half_width) {
  if (node_count < 3) throw std::invalid_argument("gaussian_trapezoid_rule: node_count must be >= 3");
  if (!(half_width > 0.0)) throw std::invalid_argument("gaussian_trapezoid_rule: half_width must be > 0");
  QuadratureRule rule;
  rule.nodes.resize(node_count);
  rule.weights.resize(node_count);
  const double h = 2.0 * half_width / (node_count - 1);
  double total = 0.0;
  for (int i = 0; i < node_count; ++i) {
    const double z = -half_width + h * i;
    rule.nodes[i] = z;
    rule.weights[i] = std::exp(-0.5 * z * z);
    total += rule.weights[i];
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

QuadratureConfig QuadratureConfig::doubled() const {
  QuadratureConfig q = *this;
  q.node_count = kind == QuadratureKind::trapezoid ? 2 * node_count - 1 : 2 * node_count;
  return q;
}

const QuadratureRule& QuadratureConfig::rule() const {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, double>, QuadratureRule> cache;
  const auto key = std::make_tuple(static_cast<int>(kind), node_count, half_width);
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it == cache.end()) {
    QuadratureRule r = kind == QuadratureKind::gauss_hermite ? gauss_hermite_rule(node_count)
                                                              : gaussian_trapezoid_rule(node_count, half_width);
    it = cache.emplace(key, std::move(r)).first;
  }
  return it->second;
}

QuadratureConfig fine_trapezoid(int node_count) {
  return QuadratureConfig{QuadratureKind::trapezoid, node_count, 12.0};
}

}  // namespace cumulab
