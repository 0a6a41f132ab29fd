#include <gtest/gtest.h>

#include <cmath>

#include "cumulab/denoiser.hpp"
#include "oracles.hpp"

using namespace cumulab;

namespace {

Vector random_unit(std::size_t d, Rng& rng) {
  Vector v(d);
  for (std::size_t i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v.normalized();
}

Vector random_vec(std::size_t d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (std::size_t i = 0; i < d; ++i) v(i) = scale * rng.gaussian();
  return v;
}

}  // namespace

TEST(Denoiser, RankOneFormula) {
  Rng rng(1);
  const Vector w = random_vec(5, rng), x = random_vec(5, rng);
  const auto act = Activation::neg_tanh();
  const DenoiserState s{w, 0.7};
  const Vector expect = -0.7 * x - act.value(w.dot(x)) * w;
  EXPECT_LT((denoise(s, act, x) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Denoiser, MatchedDenoiserEqualsExactScoreAtSpike) {
  Rng rng(2);
  for (double t : {0.1, 0.25, 0.5, 1.0}) {
    const DiffusionTime dt(t);
    const auto act = Activation::matched(dt);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector v = random_unit(30, rng);
      const Vector x = random_vec(30, rng, 2.0);
      const Vector diff = denoise({v, 1.0}, act, x) - exact_score_spiked(x, v, dt);
      EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12) << t;
    }
  }
}

TEST(Denoiser, ExactScoreIsGradientOfLogDensity) {
  Rng rng(3);
  const DiffusionTime dt(0.4);
  const Vector v = random_unit(6, rng);
  const Vector x = random_vec(6, rng);
  const Vector fd = oracle::central_gradient([&](const Vector& y) { return log_density_spiked(y, v, dt); }, x, 1e-5);
  EXPECT_LT((fd - exact_score_spiked(x, v, dt)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(exact_score_spiked(x, v, DiffusionTime(0.0)), std::domain_error);
}

TEST(EffectiveNonlinearities, DefinitionsFromLinkDerivatives) {
  const auto act = Activation::smoothed_relu(3.0);
  for (double z : {-1.0, 0.2, 1.4}) {
    for (double r : {0.5, 1.0, 1.3}) {
      const double b = 0.8;
      const auto a = act.eval(z);
      const auto e = effective_nonlinearities(act, z, r, b);
      EXPECT_NEAR(e.F_tilde, a.s2 * r * r - a.s1 * a.s * r * r - b * a.s - b * a.s1 * z, 1e-14);
      EXPECT_NEAR(e.G, 2 * a.s1 - a.s * a.s, 1e-14);
      const auto unit = effective_nonlinearities(act, z, 1.0);
      EXPECT_NEAR(unit.F, a.s2 - a.s1 * a.s - a.s - a.s1 * z, 1e-14);
    }
  }
}

TEST(Lambda, NegIdentityClosedForm) {
  // sigma = -xi: E[F_tilde'] = 2 - r^2 and E[G] = -2 - r^2.
  const auto act = Activation::neg_identity();
  for (double r : {0.25, 0.7, 1.0}) {
    for (double c2 : {0.0, 0.3}) {
      const auto lc = lambda_invariant(act, c2, r);
      EXPECT_NEAR(lc.c1_Ftilde, 2 - r * r, 1e-12);
      EXPECT_NEAR(lc.c0_G, -2 - r * r, 1e-12);
      EXPECT_NEAR(lc.lambda, (1 + c2) * (2 - r * r) - 2 - r * r, 1e-12);
      EXPECT_DOUBLE_EQ(lc.c2L, c2);
    }
  }
}

TEST(Lambda, ReducesToMinusSecondMomentIdentityWithoutSignal) {
  const auto rule = gaussian_trapezoid_rule(6401, 12.0);
  const DiffusionTime dt(0.5);
  for (const auto& act : {Activation::neg_tanh(), Activation::scaled_neg_tanh(10), Activation::smoothed_relu(10),
                          Activation::smoothed_relu_sq(10), Activation::matched(dt)}) {
    for (double r : {0.5, 1.0}) {
      EXPECT_NEAR(lambda_invariant(act, 0.0, r).lambda, oracle::lambda_reduced(act, r, rule), 1e-10)
          << act.name() << " r=" << r;
    }
  }
}

TEST(Lambda, StableUnderNodeDoubling) {
  const auto q = fine_trapezoid();
  for (double t : {0.1, 0.5, 1.0}) {
    const auto act = Activation::matched(DiffusionTime(t));
    EXPECT_NEAR(lambda_invariant(act, 0.0, 1.0, q).lambda, lambda_invariant(act, 0.0, 1.0, q.doubled()).lambda, 1e-8);
  }
  const auto st = Activation::scaled_neg_tanh(10);
  EXPECT_NEAR(lambda_invariant(st, 0.0, 1.0, q).lambda, lambda_invariant(st, 0.0, 1.0, q.doubled()).lambda, 1e-8);
}

TEST(Lambda, FrozenValues) {
  // Regression values computed with the 3201-node trapezoid rule.
  EXPECT_NEAR(lambda_invariant(Activation::matched(DiffusionTime(0.1)), 0.0, 1.0).lambda, -10.035260775973669, 1e-9);
  EXPECT_NEAR(lambda_invariant(Activation::scaled_neg_tanh(10), 0.0, 1.0).lambda, -0.009599458739668137, 1e-11);
}

TEST(Lambda, RejectsNonPositiveNorm) {
  EXPECT_THROW(lambda_invariant(Activation::neg_tanh(), 0.0, 0.0), std::invalid_argument);
}

TEST(TiedAutoencoder, InitializationScale) {
  Rng rng(4);
  const auto ae = TiedAutoencoder::random(200, 400, 1.0, rng);
  EXPECT_NEAR(ae.W.rowwise().squaredNorm().mean(), 1.0, 0.02);
  EXPECT_EQ(ae.bias, Vector::Zero(400));
  EXPECT_DOUBLE_EQ(ae.skip_alpha, 1.0);
}

TEST(TiedAutoencoder, SampleGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const std::size_t m = 3, d = 5;
  auto ae = TiedAutoencoder::random(m, d, 1.0, rng);
  ae.skip_alpha = 0.8;
  ae.bias = random_vec(d, rng, 0.1);
  const Vector x = random_vec(d, rng), target = random_vec(d, rng);
  for (const auto& act : {Activation::neg_tanh(), Activation::smoothed_relu(4)}) {
    const auto g = tied_sample_grad(ae, act, x, target);
    auto loss = [&](const TiedAutoencoder& a) { return 0.5 * (tied_forward(a, act, x) + target).squaredNorm(); };
    EXPECT_NEAR(g.loss, loss(ae), 1e-14);
    const double h = 1e-6;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        auto p = ae, q = ae;
        p.W(i, j) += h;
        q.W(i, j) -= h;
        EXPECT_NEAR(g.W(i, j), (loss(p) - loss(q)) / (2 * h), 1e-7);
      }
    }
    auto p = ae, q = ae;
    p.skip_alpha += h;
    q.skip_alpha -= h;
    EXPECT_NEAR(g.skip_alpha, (loss(p) - loss(q)) / (2 * h), 1e-7);
    for (std::size_t j = 0; j < d; ++j) {
      auto pb = ae, qb = ae;
      pb.bias(j) += h;
      qb.bias(j) -= h;
      EXPECT_NEAR(g.bias(j), (loss(pb) - loss(qb)) / (2 * h), 1e-7);
    }
  }
}
