#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "cumulab/data.hpp"

using namespace cumulab;

namespace {

double ks_normal(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-xs[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
  }
  return d;
}

std::vector<double> project(const Dataset& x, const Vector& dir) {
  const Vector p = x * dir;
  return {p.data(), p.data() + p.size()};
}

}  // namespace

TEST(DiffusionTime, ShrinkAndDelta) {
  const DiffusionTime dt(0.5);
  EXPECT_NEAR(dt.shrink(), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(dt.delta(), 1.0 - std::exp(-1.0), 1e-15);
  const auto def = default_diffusion_time();
  EXPECT_NEAR(def.shrink(), 0.8, 1e-15);
  EXPECT_NEAR(def.delta(), 0.36, 1e-15);
  EXPECT_THROW(DiffusionTime(-0.1), std::invalid_argument);
}

TEST(McmParams, SpikesAreUnitAndOrthogonal) {
  const auto p = McmParams::make(50, 2.0, 1.0, 0.0, 11);
  EXPECT_NEAR(p.u.norm(), 1.0, 1e-14);
  EXPECT_NEAR(p.v.norm(), 1.0, 1e-14);
  EXPECT_NEAR(p.u.dot(p.v), 0.0, 1e-14);
  const auto q = McmParams::make(50, 2.0, 1.0, 0.0, 11);
  EXPECT_EQ(p.u, q.u);
  EXPECT_EQ(p.v, q.v);
  const auto r = McmParams::make(50, 2.0, 1.0, 0.0, 11, false);
  EXPECT_GT(std::abs(r.u.dot(r.v)), 1e-6);
}

TEST(McmParams, RejectsInvalidSignalStrengths) {
  EXPECT_THROW(McmParams::make(10, 0.0, 1.5, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(McmParams::make(10, -1.0, 0.5, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(McmParams::make(10, 0.0, 0.5, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(McmParams::make(1, 0.0, 0.5, 0.0, 1), std::invalid_argument);
  try {
    McmParams::make(10, 0.0, 1.5, 0.0, 1);
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("PSD"), std::string::npos);
  }
}

TEST(McmSampling, CovarianceAlongSpikes) {
  const auto p = McmParams::make(20, 3.0, 1.0, 0.0, 5);
  Rng rng(9);
  const Dataset x = sample_mcm(p, 40000, rng);
  const auto xu = project(x, p.u);
  const auto xv = project(x, p.v);
  double su = 0.0, sv = 0.0, sv4 = 0.0;
  for (std::size_t i = 0; i < xu.size(); ++i) {
    su += xu[i] * xu[i];
    sv += xv[i] * xv[i];
    sv4 += std::pow(xv[i], 4);
  }
  const double n = static_cast<double>(xu.size());
  EXPECT_NEAR(su / n, 4.0, 0.1);     // 1 + beta_u
  EXPECT_NEAR(sv / n, 1.0, 1e-12);   // beta_v = 1 removes the noise along v: x.v = nu
  EXPECT_NEAR(sv4 / n, 1.0, 1e-12);  // so the excess kurtosis is -2
  Vector pv(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) pv(i) = xv[i];
  EXPECT_NEAR(excess_kurtosis(pv), -2.0, 1e-3);

  // Bulk directions are standard normal.
  Vector perp = Vector::Zero(20);
  perp(0) = 1.0;
  perp -= perp.dot(p.u) * p.u + perp.dot(p.v) * p.v;
  perp.normalize();
  EXPECT_LT(ks_normal(project(x, perp)), 1.36 / std::sqrt(n));
}

TEST(McmSampling, LatentCorrelationHasExactMarginals) {
  Rng rng(4);
  for (double corr : {0.0, 0.5, 1.0, -1.0}) {
    double cross = 0.0, nu_mean = 0.0, l2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      double l = 0.0, nu = 0.0;
      draw_latents(corr, rng, l, nu);
      ASSERT_TRUE(nu == 1.0 || nu == -1.0);
      cross += l * nu;
      nu_mean += nu;
      l2 += l * l;
    }
    EXPECT_NEAR(cross / n, corr * std::sqrt(2.0 / M_PI), 0.006) << corr;
    EXPECT_NEAR(nu_mean / n, 0.0, 0.01);
    EXPECT_NEAR(l2 / n, 1.0, 0.01);
  }
}

TEST(McmSampling, StreamIsDeterministicAndCountsSamples) {
  const auto p = McmParams::make(8, 1.0, 0.5, 0.3, 2);
  McmStream a(p, 77), b(p, 77);
  Vector xa(8), xb(8);
  for (int i = 0; i < 10; ++i) {
    a.next(xa);
    b.next(xb);
    EXPECT_EQ(xa, xb);
  }
  EXPECT_EQ(a.position(), 10u);
}

TEST(ForwardNoise, PreservesUnitVariance) {
  const auto p = McmParams::make(10, 0.0, 1.0, 0.0, 3);
  Rng rng(12);
  const Dataset x0 = sample_mcm(p, 20000, rng);
  const DiffusionTime dt(0.7);
  const Dataset xt = forward_noise(x0, dt, rng);
  const auto m = empirical_moments(xt);
  EXPECT_NEAR(m.covariance.trace() / 10.0, 1.0, 0.02);
  // Along v the noised law is a Rademacher mixture with kurtosis below 3.
  const Vector pv = xt * p.v;
  const double e2 = dt.shrink() * dt.shrink();
  EXPECT_NEAR(excess_kurtosis(pv), -2.0 * e2 * e2, 0.05);
}

TEST(Clones, MatchMomentsAndAreGaussian) {
  const auto p = McmParams::make(12, 4.0, 1.0, 0.0, 21);
  Rng rng(5);
  const Dataset real = sample_mcm(p, 20000, rng);
  const Moments m = empirical_moments(real);
  const Dataset mc = make_clone({CloneLevel::mean_cov, m}, 20000, rng);
  const Dataset mean_only = make_clone({CloneLevel::mean, m}, 20000, rng);
  const auto mm = empirical_moments(mc);
  EXPECT_LT((mm.covariance - m.covariance).cwiseAbs().maxCoeff(), 0.15);
  EXPECT_NEAR(p.u.dot(empirical_moments(mean_only).covariance * p.u), 1.0, 0.05);

  const double n = 20000.0;
  const double crit = 1.63 / std::sqrt(n);  // 1% level
  EXPECT_GT(ks_normal(project(real, p.v)), crit);
  auto pv = project(mc, p.v);
  const double sd = std::sqrt(p.v.dot(m.covariance * p.v));
  for (double& x : pv) x /= sd;
  EXPECT_LT(ks_normal(pv), crit);
}

TEST(Clones, SingularCovarianceIsFloored) {
  Moments m;
  m.mean = Vector::Zero(3);
  m.covariance = Matrix::Zero(3, 3);
  m.covariance(0, 0) = 1.0;
  Rng rng(1);
  const Dataset x = make_clone({CloneLevel::mean_cov, m}, 100, rng);
  EXPECT_TRUE(x.allFinite());
  EXPECT_LT(x.col(1).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(ExportImport, RoundTripIsBitExact) {
  const auto p = McmParams::make(6, 1.0, 1.0, 0.0, 8);
  Rng rng(2);
  const Dataset x = sample_mcm(p, 17, rng);
  const auto path = std::filesystem::temp_directory_path() / "cumulab_roundtrip.bin";
  export_dataset(path, x, R"({"d": 6})");
  const Dataset y = import_dataset(path, 6);
  EXPECT_EQ(x, y);
  EXPECT_TRUE(std::filesystem::exists(path.string() + ".json"));
  EXPECT_THROW(import_dataset(path, 5), std::runtime_error);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}
