#include "cumulab/trainer.hpp"

#include <cmath>

namespace cumulab {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::projected: return "projected";
    case TrainMode::plain: return "plain";
    case TrainMode::adam: return "adam";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "projected") return TrainMode::projected;
  if (s == "plain") return TrainMode::plain;
  if (s == "adam") return TrainMode::adam;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be finite and >= 0");
  if (record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  if (!(recovery_threshold > 0.0 && recovery_threshold < 1.0)) {
    throw std::invalid_argument("recovery_threshold must be in (0, 1)");
  }
  if (!(init_norm > 0.0)) throw std::invalid_argument("init_norm must be > 0");
  if (!stop_on.empty() && stop_on != "u" && stop_on != "v" && stop_on != "both") {
    throw std::invalid_argument("stop_on must be one of u, v, both");
  }
}

double Trajectory::max_abs_alpha_u() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, std::abs(r.alpha_u));
  return m;
}

double Trajectory::max_abs_alpha_v() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, std::abs(r.alpha_v));
  return m;
}

Vector spherical_grad_sample(const Vector& w, const Vector& x, const Activation& act) {
  const double xw = w.dot(x);
  const double F = effective_nonlinearities(act, xw, 1.0).F;
  return F * (x - xw * w);
}

Vector plain_grad_sample(const Vector& w, const Vector& x, const Activation& act, double skip_b) {
  const double xw = w.dot(x);
  const auto e = effective_nonlinearities(act, xw, w.norm(), skip_b);
  return e.F_tilde * x + e.G * w;
}

double skip_grad_sample(const Vector& w, const Vector& x, const Activation& act, double skip_b) {
  const double xw = w.dot(x);
  return static_cast<double>(x.size()) - skip_b * x.squaredNorm() - act.value(xw) * xw;
}

Vector initial_direction(const McmParams& p, bool sign_condition, Rng& rng) {
  Vector w(p.d);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (std::size_t i = 0; i < p.d; ++i) w(i) = rng.gaussian();
    w.normalize();
    if (!sign_condition || w.dot(p.u) * w.dot(p.v) > 0.0) return w;
  }
  throw std::runtime_error("initial_direction: sign condition could not be met");
}

Vector initial_with_overlap(const McmParams& p, Spike which, double alpha, Rng& rng) {
  if (!(std::abs(alpha) <= 1.0)) throw std::invalid_argument("initial_with_overlap: |alpha| must be <= 1");
  const Vector& target = which == Spike::u ? p.u : p.v;
  Vector r(p.d);
  for (std::size_t i = 0; i < p.d; ++i) r(i) = rng.gaussian();
  r -= r.dot(p.u) * p.u;
  r -= r.dot(p.v) * p.v;
  r.normalize();
  return alpha * target + std::sqrt(1.0 - alpha * alpha) * r;
}

namespace {

bool stop_reached(const std::string& stop_on, double iota, double au, double av) {
  if (stop_on.empty()) return false;
  const bool u = std::abs(au) >= iota;
  const bool v = std::abs(av) >= iota;
  if (stop_on == "u") return u;
  if (stop_on == "v") return v;
  return u && v;
}

}  // namespace

Trajectory train_online(const McmParams& p, const TrainConfig& cfg, const Activation& act) {
  Rng init(derive_seed(cfg.seed, 0));
  Vector w0 = initial_direction(p, cfg.sign_condition, init);
  if (cfg.mode == TrainMode::plain) w0 *= cfg.init_norm;
  return train_online(p, cfg, act, w0);
}

Trajectory train_online(const McmParams& p, const TrainConfig& cfg, const Activation& act,
                        const Vector& w0) {
  cfg.validate();
  p.validate();
  if (cfg.mode == TrainMode::adam) throw std::invalid_argument("train_online: use train_tied_adam for adam");
  if (static_cast<std::size_t>(w0.size()) != p.d) throw std::invalid_argument("train_online: w0 dimension mismatch");

  const bool projected = cfg.mode == TrainMode::projected;
  Vector w = w0;
  if (projected) w.normalize();
  double b = 1.0;

  McmStream stream(p, derive_seed(cfg.seed, 1));
  Rng noise(derive_seed(cfg.seed, 2));
  const double e = cfg.dt.shrink();
  const double s = std::sqrt(cfg.dt.delta());

  Trajectory traj;
  auto record = [&](std::size_t step) {
    traj.records.push_back({step, w.dot(p.u), w.dot(p.v), w.norm(), b, {}});
  };
  record(0);

  Vector x(p.d);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    stream.next(x);
    for (std::size_t i = 0; i < p.d; ++i) x(i) = e * x(i) + s * noise.gaussian();
    const double xw = w.dot(x);
    if (projected) {
      const double F = effective_nonlinearities(act, xw, 1.0).F;
      w += (cfg.eta * F) * (x - xw * w);
      w /= w.norm();
    } else {
      const auto eff = effective_nonlinearities(act, xw, w.norm(), b);
      const double db = cfg.train_skip ? skip_grad_sample(w, x, act, b) : 0.0;
      w = (1.0 + cfg.eta * eff.G) * w + (cfg.eta * eff.F_tilde) * x;
      b += cfg.eta * db;
    }
    if (!w.allFinite() || !std::isfinite(b)) {
      throw DivergenceError("train_online: iterate diverged at step " + std::to_string(step));
    }
    const bool last = step == cfg.steps;
    const bool stop = stop_reached(cfg.stop_on, cfg.recovery_threshold, w.dot(p.u), w.dot(p.v));
    if (step % cfg.record_stride == 0 || last || stop) record(step);
    if (stop) break;
  }
  traj.samples_consumed = stream.position();
  traj.w_final = w;
  return traj;
}

namespace {

struct AdamSlot {
  Matrix mW, vW;
  double ma = 0.0, va = 0.0;
  Vector mb, vb;
};

void record_tied(Trajectory& traj, std::size_t step, const TiedAutoencoder& ae, const McmParams& p,
                 const Activation& act, const DiffusionTime& dt, const LossProbe& probe, std::uint64_t eval_seed,
                 bool with_losses) {
  TrajectoryRecord r;
  r.step = step;
  const Vector norms = ae.W.rowwise().norm();
  const Vector ou = ae.W * p.u;
  const Vector ov = ae.W * p.v;
  for (Eigen::Index i = 0; i < ae.W.rows(); ++i) {
    if (norms(i) == 0.0) continue;
    r.alpha_u = std::max(r.alpha_u, std::abs(ou(i)) / norms(i));
    r.alpha_v = std::max(r.alpha_v, std::abs(ov(i)) / norms(i));
  }
  r.wnorm = norms.size() ? norms.maxCoeff() : 0.0;
  r.skip_b = ae.skip_alpha;
  if (with_losses) {
    // Every set sees the same noise draws at a given step, so loss differences
    // between sets are not swamped by Monte Carlo noise.
    for (const Dataset* set : probe.sets) {
      Rng eval_rng(derive_seed(eval_seed, step));
      r.losses.push_back(mc_loss(ae, act, dt, *set, probe.z_samples, eval_rng));
    }
  }
  traj.records.push_back(std::move(r));
}

}  // namespace

Trajectory train_tied_adam(const McmParams& p, TiedAutoencoder ae, const TrainConfig& cfg,
                           const Activation& act, std::size_t batch, const LossProbe& probe,
                           const AdamConfig& adam) {
  cfg.validate();
  p.validate();
  if (batch < 1) throw std::invalid_argument("train_tied_adam: batch must be >= 1");
  if (static_cast<std::size_t>(ae.W.cols()) != p.d || static_cast<std::size_t>(ae.bias.size()) != p.d) {
    throw std::invalid_argument("train_tied_adam: autoencoder dimension mismatch");
  }
  const auto d = static_cast<Eigen::Index>(p.d);
  const auto m = ae.W.rows();
  const auto B = static_cast<Eigen::Index>(batch);
  McmStream stream(p, derive_seed(cfg.seed, 1));
  Rng noise(derive_seed(cfg.seed, 2));
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 3);
  const double e = cfg.dt.shrink();
  const double s = std::sqrt(cfg.dt.delta());

  AdamSlot st{Matrix::Zero(m, d), Matrix::Zero(m, d), 0.0, 0.0, Vector::Zero(d), Vector::Zero(d)};
  Trajectory traj;
  auto wants_loss = [&](std::size_t step) { return probe.every > 0 && !probe.sets.empty() && step % probe.every == 0; };
  record_tied(traj, 0, ae, p, act, cfg.dt, probe, eval_seed, wants_loss(0));

  Matrix X(d, B), Z(d, B), H(m, B), dH(m, B);
  Vector x(d);
  double pow1 = 1.0, pow2 = 1.0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (Eigen::Index c = 0; c < B; ++c) {
      stream.next(x);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double z = noise.gaussian();
        X(i, c) = e * x(i) + s * z;
        Z(i, c) = z / s;
      }
    }
    const Matrix pre = ae.W * X;
    for (Eigen::Index c = 0; c < B; ++c) {
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto a = act.eval(pre(i, c));
        H(i, c) = a.s;
        dH(i, c) = a.s1;
      }
    }
    Matrix R = -ae.skip_alpha * X - ae.W.transpose() * H + Z;
    R.colwise() += ae.bias;
    const double inv = 1.0 / static_cast<double>(B);
    const Matrix gW = -(H * R.transpose() + dH.cwiseProduct(ae.W * R) * X.transpose()) * inv;
    const double ga = -(X.cwiseProduct(R)).sum() * inv;
    const Vector gb = R.rowwise().sum() * inv;

    pow1 *= adam.beta1;
    pow2 *= adam.beta2;
    const double c1 = 1.0 - pow1;
    const double c2 = 1.0 - pow2;
    st.mW = adam.beta1 * st.mW + (1.0 - adam.beta1) * gW;
    st.vW = adam.beta2 * st.vW + (1.0 - adam.beta2) * gW.cwiseProduct(gW);
    st.ma = adam.beta1 * st.ma + (1.0 - adam.beta1) * ga;
    st.va = adam.beta2 * st.va + (1.0 - adam.beta2) * ga * ga;
    st.mb = adam.beta1 * st.mb + (1.0 - adam.beta1) * gb;
    st.vb = adam.beta2 * st.vb + (1.0 - adam.beta2) * gb.cwiseProduct(gb);
    ae.W.array() -= cfg.eta * (st.mW.array() / c1) / ((st.vW.array() / c2).sqrt() + adam.epsilon);
    ae.skip_alpha -= cfg.eta * (st.ma / c1) / (std::sqrt(st.va / c2) + adam.epsilon);
    ae.bias.array() -= cfg.eta * (st.mb.array() / c1) / ((st.vb.array() / c2).sqrt() + adam.epsilon);

    if (!ae.W.allFinite() || !std::isfinite(ae.skip_alpha) || !ae.bias.allFinite()) {
      throw DivergenceError("train_tied_adam: parameters diverged at step " + std::to_string(step));
    }
    const bool last = step == cfg.steps;
    const bool loss_now = wants_loss(step);
    if (step % cfg.record_stride == 0 || last || loss_now) {
      record_tied(traj, step, ae, p, act, cfg.dt, probe, eval_seed, loss_now);
      const auto& r = traj.records.back();
      if (stop_reached(cfg.stop_on, cfg.recovery_threshold, r.alpha_u, r.alpha_v)) break;
    }
  }
  traj.samples_consumed = stream.position();
  return traj;
}

double mc_loss(const DenoiserState& st, const Activation& act, const DiffusionTime& dt,
               const Dataset& eval_set, std::size_t z_samples, Rng& rng) {
  if (z_samples < 1) throw std::invalid_argument("mc_loss: z_samples must be >= 1");
  const auto d = eval_set.cols();
  if (st.w.size() != d) throw std::invalid_argument("mc_loss: dimension mismatch");
  const double e = dt.shrink();
  const double s = std::sqrt(dt.delta());
  Vector z(d), x(d);
  double total = 0.0;
  for (Eigen::Index r = 0; r < eval_set.rows(); ++r) {
    for (std::size_t k = 0; k < z_samples; ++k) {
      for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.gaussian();
      x = e * eval_set.row(r).transpose() + s * z;
      const Vector res = denoise(st, act, x) + z / s;
      total += 0.5 * res.squaredNorm();
    }
  }
  return total / (static_cast<double>(eval_set.rows()) * static_cast<double>(z_samples) * static_cast<double>(d));
}

double mc_loss(const TiedAutoencoder& ae, const Activation& act, const DiffusionTime& dt,
               const Dataset& eval_set, std::size_t z_samples, Rng& rng) {
  if (z_samples < 1) throw std::invalid_argument("mc_loss: z_samples must be >= 1");
  const auto d = eval_set.cols();
  const auto n = eval_set.rows();
  if (ae.W.cols() != d) throw std::invalid_argument("mc_loss: dimension mismatch");
  const double e = dt.shrink();
  const double s = std::sqrt(dt.delta());
  double total = 0.0;
  Matrix X(d, n), Z(d, n);
  for (std::size_t k = 0; k < z_samples; ++k) {
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const double z = rng.gaussian();
        X(i, r) = e * eval_set(r, i) + s * z;
        Z(i, r) = z / s;
      }
    }
    Matrix H = ae.W * X;
    H = H.unaryExpr([&](double v) { return act.value(v); });
    Matrix R = -ae.skip_alpha * X - ae.W.transpose() * H + Z;
    R.colwise() += ae.bias;
    total += 0.5 * R.squaredNorm();
  }
  return total / (static_cast<double>(n) * static_cast<double>(z_samples) * static_cast<double>(d));
}

std::optional<std::size_t> weak_recovery_time(const Trajectory& traj, Spike which, double iota) {
  for (const auto& r : traj.records) {
    const double a = which == Spike::u ? r.alpha_u : r.alpha_v;
    if (std::abs(a) >= iota) return r.step;
  }
  return std::nullopt;
}

NoiseProbeReport noise_assumption_probe(const McmParams& p, const Activation& act,
                                        const DiffusionTime& dt,
                                        const std::vector<Vector>& w_grid, std::size_t mc,
                                        std::uint64_t seed, double epsilon) {
  if (mc < 2) throw std::invalid_argument("noise_assumption_probe: mc must be >= 2");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("noise_assumption_probe: epsilon must be >= 0");
  NoiseProbeReport rep;
  rep.epsilon = epsilon;
  const double e = dt.shrink();
  const double s = std::sqrt(dt.delta());
  Vector x(p.d);
  for (std::size_t gi = 0; gi < w_grid.size(); ++gi) {
    const Vector& w = w_grid[gi];
    auto pass = [&](auto&& visit) {
      McmStream stream(p, derive_seed(seed, 2 * gi));
      Rng noise(derive_seed(seed, 2 * gi + 1));
      for (std::size_t n = 0; n < mc; ++n) {
        stream.next(x);
        for (std::size_t i = 0; i < p.d; ++i) x(i) = e * x(i) + s * noise.gaussian();
        visit(spherical_grad_sample(w, x, act));
      }
    };
    Vector mean = Vector::Zero(p.d);
    pass([&](const Vector& g) { mean += g; });
    mean /= static_cast<double>(mc);
    double dir = 0.0, fourth = 0.0, mom = 0.0;
    pass([&](const Vector& g) {
      const Vector h = g - mean;
      const double hv = h.dot(p.v);
      const double n2 = h.squaredNorm();
      dir += hv * hv;
      fourth += n2 * n2;
      mom += std::pow(n2, 0.5 * (4.0 + epsilon));
    });
    const double inv = 1.0 / static_cast<double>(mc);
    rep.directional_max = std::max(rep.directional_max, dir * inv);
    rep.fourth_max = std::max(rep.fourth_max, fourth * inv);
    rep.moment_max = std::max(rep.moment_max, mom * inv);
  }
  return rep;
}

}  // namespace cumulab
