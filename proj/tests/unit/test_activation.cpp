#include <gtest/gtest.h>

#include <cmath>

#include "cumulab/activation.hpp"

using namespace cumulab;

namespace {

std::vector<Activation> all_kinds() {
  const DiffusionTime dt(0.5);
  return {Activation::neg_identity(),        Activation::neg_tanh(),
          Activation::scaled_neg_tanh(10.0), Activation::smoothed_relu(10.0),
          Activation::smoothed_relu_sq(3.0), Activation::matched(dt),
          Activation::polynomial({0.1, -1.0, 0.2, 0.05})};
}

}  // namespace

TEST(Activation, AnalyticDerivativesMatchFiniteDifferences) {
  for (const auto& act : all_kinds()) {
    for (double xi : {-2.3, -0.7, -0.05, 0.0, 0.11, 0.9, 3.1}) {
      const double h = 1e-5;
      const auto v = act.eval(xi);
      const auto p = act.eval(xi + h);
      const auto m = act.eval(xi - h);
      const double tol = 1e-5 * (1.0 + std::abs(v.s2) + std::abs(v.s3));
      EXPECT_NEAR((p.s - m.s) / (2 * h), v.s1, tol) << act.name() << " at " << xi;
      EXPECT_NEAR((p.s1 - m.s1) / (2 * h), v.s2, tol) << act.name() << " at " << xi;
      EXPECT_NEAR((p.s2 - m.s2) / (2 * h), v.s3, 1e-4 * (1.0 + std::abs(v.s3))) << act.name() << " at " << xi;
      EXPECT_DOUBLE_EQ(act.value(xi), v.s);
    }
  }
}

TEST(Activation, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(Activation::neg_identity().value(1.5), -1.5);
  EXPECT_NEAR(Activation::neg_tanh().value(0.5), -std::tanh(0.5), 1e-15);
  EXPECT_NEAR(Activation::scaled_neg_tanh(10).value(0.05), -std::tanh(0.5) / 10, 1e-15);
  EXPECT_NEAR(Activation::smoothed_relu(10).value(0.2), std::log1p(std::exp(2.0)) / 10, 1e-14);
  EXPECT_NEAR(Activation::smoothed_relu(10).value(-80.0), 0.0, 1e-300);
  EXPECT_NEAR(Activation::smoothed_relu(10).value(80.0), 80.0, 1e-12);
  const double sr = std::log1p(std::exp(-1.0)) / 10;
  EXPECT_NEAR(Activation::smoothed_relu_sq(10).value(-0.1), sr * sr, 1e-15);
  EXPECT_NEAR(Activation::polynomial({1, 2, 3}).value(2.0), 17.0, 1e-14);
}

TEST(Activation, MatchedLinkFormula) {
  const DiffusionTime dt(0.25);
  const double e = dt.shrink(), k = e / dt.delta();
  for (double xi : {-1.0, 0.3, 2.0}) {
    EXPECT_NEAR(matched_sigma(dt, xi), k * (e * xi - std::tanh(k * xi)), 1e-14);
    EXPECT_NEAR(Activation::matched(dt).value(xi), matched_sigma(dt, xi), 1e-14);
  }
  EXPECT_THROW(Activation::matched(DiffusionTime(0.0)), std::domain_error);
}

TEST(Activation, Oddness) {
  EXPECT_TRUE(Activation::neg_tanh().is_odd());
  EXPECT_TRUE(Activation::matched(DiffusionTime(1.0)).is_odd());
  EXPECT_TRUE(Activation::polynomial({0, 1, 0, -0.1}).is_odd());
  EXPECT_FALSE(Activation::polynomial({0.5, 1}).is_odd());
  EXPECT_FALSE(Activation::smoothed_relu().is_odd());
  for (const auto& act : all_kinds()) {
    if (!act.is_odd()) continue;
    for (double xi : {0.3, 1.7}) EXPECT_DOUBLE_EQ(act.value(-xi), -act.value(xi)) << act.name();
  }
}

TEST(Activation, ParseRoundTripsNames) {
  const DiffusionTime dt(0.5);
  for (const std::string spec : {"neg_identity", "neg_tanh", "scaled_neg_tanh:10", "smoothed_relu:10",
                                 "smoothed_relu_sq:4", "matched", "matched:0.3", "polynomial:0,1,0,-0.1"}) {
    EXPECT_NO_THROW(Activation::parse(spec, dt)) << spec;
  }
  EXPECT_NEAR(Activation::parse("matched:0.3", dt).value(0.7), matched_sigma(DiffusionTime(0.3), 0.7), 1e-14);
  EXPECT_NEAR(Activation::parse("matched", dt).value(0.7), matched_sigma(dt, 0.7), 1e-14);
  EXPECT_THROW(Activation::parse("relu", dt), std::invalid_argument);
  EXPECT_THROW(Activation::parse("scaled_neg_tanh:0", dt), std::invalid_argument);
  EXPECT_THROW(Activation::parse("polynomial:", dt), std::invalid_argument);
  EXPECT_THROW(Activation::parse("matched", DiffusionTime(0.0)), std::domain_error);
}
