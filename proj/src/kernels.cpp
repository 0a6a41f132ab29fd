#include <cmath>
#include <stdexcept>

#include "cumulab/analytics.hpp"

namespace cumulab {

namespace {

constexpr std::size_t kBlock = 512;

struct GradBlock {
  Vector sum;
  double su = 0.0, sv = 0.0, sw = 0.0;
  double qu = 0.0, qv = 0.0, qw = 0.0;
};

GradBlock grad_block(const Vector& w, const Vector& what, const McmParams& p, const DiffusionTime& dt,
                     const Activation& act, DriftForm form, std::size_t count, std::uint64_t seed,
                     std::size_t block) {
  McmStream stream(p, derive_seed(seed, 2 * block));
  Rng noise(derive_seed(seed, 2 * block + 1));
  const double e = dt.shrink();
  const double s = std::sqrt(dt.delta());
  GradBlock out{Vector::Zero(p.d)};
  Vector x(p.d);
  for (std::size_t n = 0; n < count; ++n) {
    stream.next(x);
    for (std::size_t i = 0; i < p.d; ++i) x(i) = e * x(i) + s * noise.gaussian();
    const Vector g = form == DriftForm::spherical ? spherical_grad_sample(w, x, act)
                                                  : plain_grad_sample(w, x, act);
    const double gu = g.dot(p.u);
    const double gv = g.dot(p.v);
    const double gw = g.dot(what);
    out.sum += g;
    out.su += gu;
    out.sv += gv;
    out.sw += gw;
    out.qu += gu * gu;
    out.qv += gv * gv;
    out.qw += gw * gw;
  }
  return out;
}

struct LossBlock {
  double sum = 0.0;
  double sq = 0.0;
};

LossBlock loss_block(const DenoiserState& st, const McmParams& p, const DiffusionTime& dt,
                     const Activation& act, std::size_t count, std::uint64_t seed, std::size_t block) {
  McmStream stream(p, derive_seed(seed, 2 * block));
  Rng noise(derive_seed(seed, 2 * block + 1));
  const double e = dt.shrink();
  const double s = std::sqrt(dt.delta());
  const double inv_d = 1.0 / static_cast<double>(p.d);
  LossBlock out;
  Vector x0(p.d), z(p.d), x(p.d);
  for (std::size_t n = 0; n < count; ++n) {
    stream.next(x0);
    for (std::size_t i = 0; i < p.d; ++i) z(i) = noise.gaussian();
    x = e * x0 + s * z;
    const double l = 0.5 * (denoise(st, act, x) + z / s).squaredNorm() * inv_d;
    out.sum += l;
    out.sq += l * l;
  }
  return out;
}

std::size_t block_count(std::size_t samples) { return (samples + kBlock - 1) / kBlock; }

std::size_t block_size(std::size_t samples, std::size_t b) {
  return std::min(kBlock, samples - b * kBlock);
}

double standard_error(double sum, double sq, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  const double var = std::max(0.0, (sq - nn * mean * mean) / (nn - 1.0));
  return std::sqrt(var / nn);
}

}  // namespace

PopulationGrad mc_population_grad(const Vector& w, const McmParams& p, const DiffusionTime& dt,
                                  const Activation& act, DriftForm form, std::size_t samples,
                                  std::uint64_t seed, Exec exec) {
  if (samples < 2) throw std::invalid_argument("mc_population_grad: need at least 2 samples");
  if (static_cast<std::size_t>(w.size()) != p.d) throw std::invalid_argument("mc_population_grad: dimension mismatch");
  p.validate();
  const Vector what = w / w.norm();
  const std::size_t nb = block_count(samples);
  std::vector<GradBlock> blocks(nb);
  const auto n_blocks = static_cast<long>(nb);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < n_blocks; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      blocks[ub] = grad_block(w, what, p, dt, act, form, block_size(samples, ub), seed, ub);
    }
  } else {
    for (long b = 0; b < n_blocks; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      blocks[ub] = grad_block(w, what, p, dt, act, form, block_size(samples, ub), seed, ub);
    }
  }
  GradBlock acc{Vector::Zero(p.d)};
  for (const auto& b : blocks) {
    acc.sum += b.sum;
    acc.su += b.su;
    acc.sv += b.sv;
    acc.sw += b.sw;
    acc.qu += b.qu;
    acc.qv += b.qv;
    acc.qw += b.qw;
  }
  const double n = static_cast<double>(samples);
  PopulationGrad out;
  out.samples = samples;
  out.mean = acc.sum / n;
  out.along_u = acc.su / n;
  out.along_v = acc.sv / n;
  out.along_w = acc.sw / n;
  out.se_u = standard_error(acc.su, acc.qu, samples);
  out.se_v = standard_error(acc.sv, acc.qv, samples);
  out.se_w = standard_error(acc.sw, acc.qw, samples);
  return out;
}

LossEstimate mc_population_loss(const DenoiserState& s, const McmParams& p, const DiffusionTime& dt,
                                const Activation& act, std::size_t samples, std::uint64_t seed,
                                Exec exec) {
  if (samples < 2) throw std::invalid_argument("mc_population_loss: need at least 2 samples");
  if (static_cast<std::size_t>(s.w.size()) != p.d) throw std::invalid_argument("mc_population_loss: dimension mismatch");
  p.validate();
  const std::size_t nb = block_count(samples);
  std::vector<LossBlock> blocks(nb);
  const auto n_blocks = static_cast<long>(nb);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < n_blocks; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      blocks[ub] = loss_block(s, p, dt, act, block_size(samples, ub), seed, ub);
    }
  } else {
    for (long b = 0; b < n_blocks; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      blocks[ub] = loss_block(s, p, dt, act, block_size(samples, ub), seed, ub);
    }
  }
  double sum = 0.0, sq = 0.0;
  for (const auto& b : blocks) {
    sum += b.sum;
    sq += b.sq;
  }
  return {sum / static_cast<double>(samples), standard_error(sum, sq, samples)};
}

}  // namespace cumulab
