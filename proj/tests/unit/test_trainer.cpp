#include <gtest/gtest.h>

#include <cmath>

#include "cumulab/trainer.hpp"
#include "oracles.hpp"

using namespace cumulab;

namespace {

Vector random_vec(std::size_t d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (std::size_t i = 0; i < d; ++i) v(i) = scale * rng.gaussian();
  return v;
}

TrainConfig quick_config(std::size_t steps, double eta) {
  TrainConfig c;
  c.steps = steps;
  c.eta = eta;
  c.record_stride = 10;
  c.seed = 99;
  return c;
}

}  // namespace

TEST(SampleGradients, MatchFiniteDifferencesOfZAveragedLoss) {
  const QuadratureRule& rule = fine_trapezoid().rule();
  Rng rng(17);
  for (const auto& act : {Activation::neg_tanh(), Activation::polynomial({0.0, -1.0, 0.0, 0.1}),
                          Activation::smoothed_relu(4.0), Activation::matched(DiffusionTime(0.6))}) {
    const DiffusionTime dt(0.4);
    const Vector x0 = random_vec(4, rng);
    const Vector m = dt.shrink() * x0;
    Vector w = random_vec(4, rng);
    w *= 0.8 / w.norm();
    auto L = [&](const Vector& v) { return oracle::z_averaged_loss(v, m, act, dt, rule); };

    const Vector neg_grad = -oracle::central_gradient(L, w, 1e-5);
    const Vector plain = oracle::z_averaged_op(w, m, dt, rule, [&](const Vector& x) { return plain_grad_sample(w, x, act); });
    EXPECT_LT(oracle::rel_err(plain, neg_grad), 1e-5) << act.name();

    const Vector u = w.normalized();
    const Vector g_unit = -oracle::central_gradient(L, u, 1e-5);
    const Vector tangent = g_unit - u.dot(g_unit) * u;
    const Vector sph = oracle::z_averaged_op(u, m, dt, rule, [&](const Vector& x) { return spherical_grad_sample(u, x, act); });
    EXPECT_LT(oracle::rel_err(sph, tangent), 1e-5) << act.name();
    EXPECT_NEAR(sph.dot(u), 0.0, 1e-12);
  }
}

TEST(Initialization, SignConditionAndPinnedOverlap) {
  const auto p = McmParams::make(40, 1.0, 1.0, 1.0, 3);
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Vector w = initial_direction(p, true, rng);
    EXPECT_NEAR(w.norm(), 1.0, 1e-14);
    EXPECT_GT(w.dot(p.u) * w.dot(p.v), 0.0);
  }
  const Vector w = initial_with_overlap(p, Spike::v, 0.2, rng);
  EXPECT_NEAR(w.norm(), 1.0, 1e-14);
  EXPECT_NEAR(w.dot(p.v), 0.2, 1e-14);
  EXPECT_NEAR(w.dot(p.u), 0.0, 1e-14);
  EXPECT_THROW(initial_with_overlap(p, Spike::u, 1.5, rng), std::invalid_argument);
}

TEST(TrainOnline, ProjectedStaysOnSphereAndIsDeterministic) {
  const auto p = McmParams::make(20, 2.0, 0.0, 0.0, 4);
  const auto act = Activation::neg_identity();
  const auto a = train_online(p, quick_config(205, 0.01), act);
  const auto b = train_online(p, quick_config(205, 0.01), act);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].alpha_u, b.records[i].alpha_u);
    EXPECT_NEAR(a.records[i].wnorm, 1.0, 1e-12);
  }
  EXPECT_EQ(a.records.front().step, 0u);
  EXPECT_EQ(a.records.back().step, 205u);
  EXPECT_EQ(a.records.size(), 22u);  // 0, 10, ..., 200, 205
  EXPECT_EQ(a.samples_consumed, 205u);
  EXPECT_NEAR(a.w_final.norm(), 1.0, 1e-12);
}

TEST(TrainOnline, OddLinkIsSignEquivariant) {
  const auto p = McmParams::make(16, 0.0, 1.0, 0.0, 6);
  const auto act = Activation::neg_tanh();
  Rng rng(1);
  const Vector w0 = initial_with_overlap(p, Spike::v, 0.3, rng);
  const auto a = train_online(p, quick_config(300, 0.02), act, w0);
  const auto b = train_online(p, quick_config(300, 0.02), act, -w0);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].alpha_v, -b.records[i].alpha_v);
    EXPECT_EQ(a.records[i].alpha_u, -b.records[i].alpha_u);
  }
}

TEST(TrainOnline, WishartSpikeIsRecoveredAndStopOnHalts) {
  const auto p = McmParams::make(32, 3.0, 0.0, 0.0, 2);
  auto cfg = quick_config(20000, 0.01);
  cfg.stop_on = "u";
  const auto traj = train_online(p, cfg, Activation::neg_identity());
  const auto t = weak_recovery_time(traj, Spike::u, 0.5);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(traj.records.back().step, *t);
  EXPECT_LT(*t, 20000u);
  EXPECT_GE(std::abs(traj.records.back().alpha_u), 0.5);
}

TEST(TrainOnline, PlainModeDivergenceIsReported) {
  const auto p = McmParams::make(50, 0.0, 1.0, 0.0, 2);
  auto cfg = quick_config(2000, 5.0);
  cfg.mode = TrainMode::plain;
  EXPECT_THROW(train_online(p, cfg, Activation::neg_identity()), DivergenceError);
}

TEST(TrainOnline, PlainModeSmallStepShrinksNorm) {
  const auto p = McmParams::make(20, 0.0, 1.0, 0.0, 2);
  auto cfg = quick_config(3000, 1e-3);
  cfg.mode = TrainMode::plain;
  cfg.dt = DiffusionTime(0.5);
  const auto traj = train_online(p, cfg, Activation::matched(cfg.dt));
  EXPECT_LT(traj.records.back().wnorm, traj.records.front().wnorm);
}

TEST(TrainConfig, ValidationErrors) {
  TrainConfig c;
  c.record_stride = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.recovery_threshold = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.stop_on = "w";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_train_mode("plain"), TrainMode::plain);
  EXPECT_EQ(to_string(TrainMode::adam), "adam");
  EXPECT_THROW(parse_train_mode("sgd"), std::invalid_argument);
}

TEST(WeakRecovery, FirstCrossing) {
  Trajectory t;
  t.records = {{0, 0.1, 0.0, 1, 1, {}}, {10, -0.6, 0.2, 1, 1, {}}, {20, 0.7, 0.55, 1, 1, {}}};
  EXPECT_EQ(weak_recovery_time(t, Spike::u, 0.5), 10u);
  EXPECT_EQ(weak_recovery_time(t, Spike::v, 0.5), 20u);
  EXPECT_FALSE(weak_recovery_time(t, Spike::v, 0.6).has_value());
  EXPECT_DOUBLE_EQ(t.max_abs_alpha_u(), 0.7);
}

TEST(McLoss, ExactScoreBeatsRandomDirection) {
  const auto p = McmParams::make(30, 0.0, 1.0, 0.0, 9);
  const DiffusionTime dt(0.3);
  const auto act = Activation::matched(dt);
  Rng data_rng(1);
  const Dataset x = sample_mcm(p, 3000, data_rng);
  Rng r1(5), r2(5);
  Rng wr(2);
  const double at_v = mc_loss(DenoiserState{p.v, 1.0}, act, dt, x, 2, r1);
  const double at_rand = mc_loss(DenoiserState{random_vec(30, wr).normalized(), 1.0}, act, dt, x, 2, r2);
  EXPECT_LT(at_v, at_rand);
}

TEST(TiedAdam, DeterministicWithCommonRandomNumbersAcrossSets) {
  const auto p = McmParams::make(12, 4.0, 1.0, 0.0, 5);
  Rng rng(3);
  const auto ae = TiedAutoencoder::random(3, 12, 1.0, rng);
  const Dataset x = sample_mcm(p, 200, rng);
  LossProbe probe;
  probe.sets = {&x, &x};
  probe.every = 50;
  TrainConfig cfg = quick_config(120, 1e-3);
  cfg.mode = TrainMode::adam;
  const auto a = train_tied_adam(p, ae, cfg, Activation::neg_tanh(), 8, probe);
  const auto b = train_tied_adam(p, ae, cfg, Activation::neg_tanh(), 8, probe);
  ASSERT_EQ(a.records.size(), b.records.size());
  std::size_t with_losses = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].alpha_v, b.records[i].alpha_v);
    if (a.records[i].losses.empty()) continue;
    ++with_losses;
    ASSERT_EQ(a.records[i].losses.size(), 2u);
    EXPECT_EQ(a.records[i].losses[0], a.records[i].losses[1]);
  }
  EXPECT_EQ(with_losses, 3u);  // steps 0, 50, 100
  EXPECT_EQ(a.samples_consumed, 120u * 8u);
}

TEST(TiedAdam, MismatchedShapesThrow) {
  const auto p = McmParams::make(12, 0.0, 1.0, 0.0, 5);
  Rng rng(3);
  const auto ae = TiedAutoencoder::random(3, 10, 1.0, rng);
  TrainConfig cfg = quick_config(10, 1e-3);
  EXPECT_THROW(train_tied_adam(p, ae, cfg, Activation::neg_tanh(), 4), std::invalid_argument);
}

TEST(NoiseProbe, MomentsAreFiniteAndOrdered) {
  const auto p = McmParams::make(10, 0.0, 1.0, 0.0, 1);
  Rng rng(2);
  std::vector<Vector> grid;
  for (int i = 0; i < 3; ++i) grid.push_back(random_vec(10, rng).normalized());
  const auto r = noise_assumption_probe(p, Activation::neg_tanh(), DiffusionTime(0.5), grid, 2000, 4);
  EXPECT_GT(r.directional_max, 0.0);
  EXPECT_GT(r.fourth_max, 0.0);
  EXPECT_TRUE(std::isfinite(r.moment_max));
  const auto again = noise_assumption_probe(p, Activation::neg_tanh(), DiffusionTime(0.5), grid, 2000, 4);
  EXPECT_EQ(r.fourth_max, again.fourth_max);
}
