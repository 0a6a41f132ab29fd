#include "cumulab/hermite.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cumulab {

double hermite_eval(int m, double x) {
  if (m < 0) throw std::invalid_argument("hermite_eval: degree must be >= 0");
  if (m == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < m; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

std::vector<double> hermite_values(int max_degree, double x) {
  if (max_degree < 0) throw std::invalid_argument("hermite_values: degree must be >= 0");
  std::vector<double> h(max_degree + 1);
  h[0] = 1.0;
  if (max_degree >= 1) h[1] = x;
  for (int k = 1; k < max_degree; ++k) h[k + 1] = x * h[k] - k * h[k - 1];
  return h;
}

double hermite_tensor(std::span<const int> alpha, std::span<const double> y) {
  if (alpha.size() != y.size()) throw std::invalid_argument("hermite_tensor: dimension mismatch");
  double out = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) out *= hermite_eval(alpha[i], y[i]);
  return out;
}

bool HermiteSpectrum::is_nonzero(int k) const {
  if (k < 0 || k >= static_cast<int>(coeffs.size())) return false;
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return false;
  return std::abs(coeffs[k]) > zero_tol * scale;
}

double HermiteSpectrum::reconstruct(double z) const {
  const auto h = hermite_values(std::max(truncation_order(), 0), z);
  double acc = 0.0;
  double factorial = 1.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    if (k > 0) factorial *= static_cast<double>(k);
    acc += coeffs[k] / factorial * h[k];
  }
  return acc;
}

HermiteSpectrum hermite_coeffs(const std::function<double(double)>& f, int K,
                               const QuadratureConfig& q) {
  if (K < 0) throw std::invalid_argument("hermite_coeffs: truncation must be >= 0");
  const QuadratureRule& rule = q.rule();
  HermiteSpectrum s;
  s.coeffs.assign(K + 1, 0.0);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    if (rule.weights[i] == 0.0) continue;
    const double z = rule.nodes[i];
    const double fz = f(z);
    if (!std::isfinite(fz)) {
      throw std::domain_error("hermite_coeffs: non-finite value at node z=" + std::to_string(z));
    }
    const auto h = hermite_values(K, z);
    for (int k = 0; k <= K; ++k) s.coeffs[k] += rule.weights[i] * fz * h[k];
  }
  return s;
}

std::optional<int> information_exponent(const HermiteSpectrum& s) {
  for (int k = 1; k <= s.truncation_order(); ++k) {
    if (s.is_nonzero(k)) return k;
  }
  return std::nullopt;
}

std::optional<int> diffusion_information_exponent(const HermiteSpectrum& cL,
                                                  const HermiteSpectrum& cF) {
  const int K = std::min(cL.truncation_order(), cF.truncation_order() + 1);
  for (int k = 1; k <= K; ++k) {
    if (cL.is_nonzero(k) && cF.is_nonzero(k - 1)) return k;
  }
  return std::nullopt;
}

double finite_difference_partial(const std::function<double(std::span<const double>)>& f,
                                 std::span<const int> alpha, std::span<const double> y,
                                 double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_partial: step must be > 0");
  // Tensor product of 1-D central stencils: d^n g ~ h^{-n} sum_j (-1)^j C(n,j) g(y + (n/2 - j) h).
  std::vector<double> point(y.begin(), y.end());
  double total = 0.0;
  std::vector<int> index(alpha.size(), 0);
  while (true) {
    double coef = 1.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const int n = alpha[i];
      const int j = index[i];
      double binom = 1.0;
      for (int r = 0; r < j; ++r) binom = binom * (n - r) / (r + 1);
      coef *= ((j % 2) ? -binom : binom) / std::pow(step, n);
      point[i] = y[i] + (0.5 * n - j) * step;
    }
    total += coef * f(point);
    std::size_t i = 0;
    for (; i < alpha.size(); ++i) {
      if (++index[i] <= alpha[i]) break;
      index[i] = 0;
    }
    if (i == alpha.size()) break;
  }
  return total;
}

SteinResult stein_residual(const SteinFunction& f, std::span<const int> alpha,
                           std::size_t samples, Rng& rng) {
  if (samples < 2) throw std::invalid_argument("stein_residual: need at least 2 samples");
  if (!f.value) throw std::invalid_argument("stein_residual: missing function value");
  if (!f.derivative && !(f.fd_step > 0.0)) {
    throw std::invalid_argument("stein_residual: finite-difference step must be > 0");
  }
  for (int a : alpha) {
    if (a < 0) throw std::invalid_argument("stein_residual: multi-index entries must be >= 0");
  }
  const std::size_t dim = alpha.size();
  std::vector<double> y(dim);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    for (double& yi : y) yi = rng.gaussian();
    const double lhs = hermite_tensor(alpha, y) * f.value(y);
    const double rhs = f.derivative ? f.derivative(y, alpha)
                                    : finite_difference_partial(f.value, alpha, y, f.fd_step);
    const double diff = lhs - rhs;
    const double delta = diff - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (diff - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {std::abs(mean), std::sqrt(var / static_cast<double>(samples)), samples};
}

namespace {

// n! sum_m (-1)^m x^{n-2m} / (m! (n-2m)! 2^m)
double hermite_explicit(int n, double x) {
  double acc = 0.0;
  double fact_n = std::tgamma(n + 1.0);
  for (int m = 0; 2 * m <= n; ++m) {
    const double term = fact_n / (std::tgamma(m + 1.0) * std::tgamma(n - 2 * m + 1.0) * std::ldexp(1.0, m));
    acc += (m % 2 == 0 ? 1.0 : -1.0) * term * std::pow(x, n - 2 * m);
  }
  return acc;
}

}  // namespace

HermiteAudit hermite_audit(int max_degree, int nodes, int mehler_degree, double a) {
  if (max_degree < 1 || nodes < 2 || mehler_degree < 0) throw std::invalid_argument("hermite_audit: bad arguments");
  if (!(std::abs(a) <= 1.0)) throw std::invalid_argument("hermite_audit: |a| must be <= 1");
  HermiteAudit out;
  QuadratureConfig q;
  q.node_count = nodes;
  const QuadratureRule& rule = q.rule();

  for (int m = 0; m <= max_degree; ++m) {
    for (int n = 0; n <= max_degree; ++n) {
      const double e = rule.expect([&](double z) { return hermite_eval(m, z) * hermite_eval(n, z); });
      const double target = m == n ? std::tgamma(n + 1.0) : 0.0;
      const double scale = std::sqrt(std::tgamma(m + 1.0) * std::tgamma(n + 1.0));
      out.orthogonality = std::max(out.orthogonality, std::abs(e - target) / scale);
    }
  }

  for (int i = 0; i <= 60; ++i) {
    const double x = -3.0 + 0.1 * i;
    for (int n = 1; n < max_degree; ++n) {
      const double hp = hermite_explicit(n + 1, x), h = hermite_explicit(n, x), hm = hermite_explicit(n - 1, x);
      const double res = hp - x * h + n * hm;
      const double scale = std::abs(hp) + std::abs(x * h) + n * std::abs(hm) + 1.0;
      out.recurrence = std::max(out.recurrence, std::abs(res) / scale);
      out.recurrence = std::max(out.recurrence, std::abs(hermite_eval(n, x) - h) / (std::abs(h) + 1.0));
    }
  }

  const double s = std::sqrt(1.0 - a * a);
  for (int i = 0; i <= 40; ++i) {
    const double x = -2.0 + 0.1 * i;
    for (int k = 0; k <= mehler_degree; ++k) {
      const double lhs = rule.expect([&](double g) { return hermite_eval(k, a * x + s * g); });
      out.mehler = std::max(out.mehler, std::abs(lhs - std::pow(a, k) * hermite_eval(k, x)));
    }
  }
  return out;
}

}  // namespace cumulab
