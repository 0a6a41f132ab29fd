#include "cumulab/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cumulab {

namespace {

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

// E|g|^i for odd i: sqrt(2/pi) (i-1)!!.
double abs_moment_odd(int i) { return std::sqrt(2.0 / M_PI) * double_factorial(i - 1); }

double factorial(int n) {
  double r = 1.0;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

}  // namespace

Matrix likelihood_table(const McmParams& p, const DiffusionTime& dt, int K) {
  if (K < 0) throw std::invalid_argument("likelihood_table: K must be >= 0");
  const double b = dt.shrink() * std::sqrt(p.beta_u);
  const double a = dt.shrink() * std::sqrt(p.beta_v);
  Matrix c = Matrix::Zero(K + 1, K + 1);
  for (int i = 0; i <= K; ++i) {
    for (int j = 0; j <= K; ++j) {
      double latent = 0.0;  // E[lambda^i nu^j]
      if (j % 2 == 0) {
        latent = i % 2 == 0 ? double_factorial(i - 1) : 0.0;
      } else {
        latent = i % 2 == 1 ? p.latent_corr * abs_moment_odd(i) : 0.0;
      }
      if (latent == 0.0) continue;
      c(i, j) = std::pow(b, i) * std::pow(a, j) * hermite_eval(j, 1.0) * latent;
    }
  }
  return c;
}

double cumulant_coeff_oracle(int k, double beta_v, const DiffusionTime& dt, const QuadratureConfig& q) {
  if (!(beta_v >= 0.0 && beta_v <= 1.0)) throw std::invalid_argument("cumulant_coeff_oracle: beta_v must be in [0, 1]");
  const double a = dt.shrink() * std::sqrt(beta_v);
  const double s = std::sqrt(1.0 - a * a);
  const QuadratureRule& rule = q.rule();
  return 0.5 * rule.expect([&](double g) { return hermite_eval(k, a + s * g) + hermite_eval(k, -a + s * g); });
}

C4Resolution resolve_c4(const DiffusionTime& dt, double tol) {
  C4Resolution r;
  r.t = dt.t();
  r.oracle = cumulant_coeff_oracle(4, 1.0, dt);
  const double e2 = dt.shrink() * dt.shrink();
  r.cumulant_formula = e2 * e2 - 3.0 * e2;
  r.semigroup = -2.0 * e2 * e2;
  const bool ms = std::abs(r.oracle - r.semigroup) < tol;
  const bool mp = std::abs(r.oracle - r.cumulant_formula) < tol;
  r.matches = ms && mp ? "both" : ms ? "semigroup" : mp ? "cumulant_formula" : "neither";
  return r;
}

std::vector<double> ftilde_derivative_moments(const Activation& act, double wnorm, int K,
                                              const QuadratureConfig& q) {
  if (!(wnorm > 0.0)) throw std::invalid_argument("ftilde_derivative_moments: wnorm must be > 0");
  const auto spec = hermite_coeffs(
      [&](double g) { return effective_nonlinearities(act, wnorm * g, wnorm).F_tilde; }, K, q);
  std::vector<double> out(K + 1);
  for (int k = 0; k <= K; ++k) out[k] = spec.coeffs[k] / std::pow(wnorm, k);
  return out;
}

std::vector<double> g_derivative_moments(const Activation& act, double wnorm, int K,
                                         const QuadratureConfig& q) {
  if (!(wnorm > 0.0)) throw std::invalid_argument("g_derivative_moments: wnorm must be > 0");
  const auto spec = hermite_coeffs(
      [&](double g) { return effective_nonlinearities(act, wnorm * g, wnorm).G; }, K, q);
  std::vector<double> out(K + 1);
  for (int k = 0; k <= K; ++k) out[k] = spec.coeffs[k] / std::pow(wnorm, k);
  return out;
}

DriftPrediction predict_drift(const Matrix& cL, const Activation& act, double alpha_u,
                              double alpha_v, int K, DriftForm form, double wnorm,
                              const QuadratureConfig& q) {
  if (K < 1) throw std::invalid_argument("predict_drift: K must be >= 1");
  if (cL.rows() < K + 1 || cL.cols() < K + 1) throw std::invalid_argument("predict_drift: likelihood table truncated below K");
  const double rho = form == DriftForm::spherical ? 1.0 : wnorm;
  if (alpha_u * alpha_u + alpha_v * alpha_v > rho * rho * (1.0 + 1e-12)) {
    throw std::invalid_argument("predict_drift: overlaps exceed the weight norm");
  }
  const auto cF = ftilde_derivative_moments(act, rho, K + 1, q);
  const auto cG = form == DriftForm::plain ? g_derivative_moments(act, rho, K, q) : std::vector<double>(K + 1, 0.0);

  // E_P[x F(x.w)] = A_u u + A_v v + A_w w and E_P[G(x.w)] = A_g.
  double Au = 0.0, Av = 0.0, Aw = 0.0, Ag = 0.0;
  for (int i = 0; i <= K; ++i) {
    for (int j = 0; i + j <= K; ++j) {
      const double mono = std::pow(alpha_u, i) * std::pow(alpha_v, j) / (factorial(i) * factorial(j));
      if (i + j + 1 <= K) {
        Au += cF[i + j] * cL(i + 1, j) * mono;
        Av += cF[i + j] * cL(i, j + 1) * mono;
      }
      Aw += cF[i + j + 1] * cL(i, j) * mono;
      Ag += cG[i + j] * cL(i, j) * mono;
    }
  }
  const double Wc = Aw + Ag;
  const double Vu = Au + Wc * alpha_u;
  const double Vv = Av + Wc * alpha_v;
  const double Vw = Au * alpha_u + Av * alpha_v + Wc * rho * rho;

  DriftPrediction out;
  out.alpha_u = alpha_u;
  out.alpha_v = alpha_v;
  out.wnorm = rho;
  out.K = K;
  if (form == DriftForm::spherical) {
    out.along_u = Vu - Vw * alpha_u;
    out.along_v = Vv - Vw * alpha_v;
    out.along_w = 0.0;
  } else {
    out.along_u = Vu;
    out.along_v = Vv;
    out.along_w = Vw / rho;
  }
  return out;
}

ContractionReport contraction_check(const Trajectory& traj, double gamma_bar, double slack,
                                    std::optional<double> delta_bar) {
  ContractionReport rep;
  if (traj.records.empty()) return rep;
  const double delta = delta_bar.value_or(gamma_bar);
  const auto& first = traj.records.front();
  const double a0u = std::abs(first.alpha_u);
  const double a0v = std::abs(first.alpha_v);
  const double n0 = first.wnorm;
  for (const auto& r : traj.records) {
    const double tau = static_cast<double>(r.step - first.step);
    const double ga = std::pow(gamma_bar, tau);
    const double gd = std::pow(delta, tau);
    std::string why;
    if (std::abs(r.alpha_v) > ga * a0v + slack) why = "alpha_v";
    else if (std::abs(r.alpha_u) > ga * a0u + slack) why = "alpha_u";
    else if (r.wnorm > gd * n0 + slack) why = "wnorm";
    if (!why.empty()) {
      rep.pass = false;
      rep.first_violation = r.step;
      rep.detail = why + " bound violated at step " + std::to_string(r.step);
      return rep;
    }
  }
  return rep;
}

ScalingFit scaling_fit(const std::vector<std::pair<double, std::optional<double>>>& pairs) {
  ScalingFit fit;
  std::set<double> distinct;
  for (const auto& [d, t] : pairs) {
    if (!t) throw std::invalid_argument("scaling_fit: censored run (no recovery time) at d=" + std::to_string(d));
    if (!(d > 0.0) || !(*t > 0.0)) throw std::invalid_argument("scaling_fit: d and times must be > 0");
    fit.points.emplace_back(d, *t);
    distinct.insert(d);
  }
  if (distinct.size() < 3) throw std::invalid_argument("scaling_fit: need at least 3 distinct d values");
  const double n = static_cast<double>(fit.points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [d, t] : fit.points) {
    sx += std::log(d);
    sy += std::log(t);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [d, t] : fit.points) {
    const double x = std::log(d) - mx;
    sxx += x * x;
    sxy += x * (std::log(t) - my);
  }
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  double ss = 0.0;
  for (const auto& [d, t] : fit.points) {
    const double r = std::log(t) - (fit.intercept + fit.exponent * std::log(d));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

}  // namespace cumulab
