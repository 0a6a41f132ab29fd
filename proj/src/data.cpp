#include "cumulab/data.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cumulab {

DiffusionTime::DiffusionTime(double t) : t_(t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("DiffusionTime: t must be finite and >= 0");
  shrink_ = std::exp(-t);
  delta_ = -std::expm1(-2.0 * t);
}

DiffusionTime DiffusionTime::from_shrink(double shrink) {
  if (!(shrink > 0.0 && shrink <= 1.0)) throw std::invalid_argument("DiffusionTime: shrink must be in (0, 1]");
  return DiffusionTime(-std::log(shrink));
}

McmParams McmParams::make(std::size_t d, double beta_u, double beta_v, double latent_corr,
                          std::uint64_t seed, bool orthogonal) {
  if (d < 2) throw std::invalid_argument("McmParams: d must be >= 2");
  McmParams p;
  p.d = d;
  p.beta_u = beta_u;
  p.beta_v = beta_v;
  p.latent_corr = latent_corr;
  p.seed = seed;
  Rng rng(derive_seed(seed, 0x5b1e5ULL));
  p.u.resize(d);
  p.v.resize(d);
  for (std::size_t i = 0; i < d; ++i) p.u(i) = rng.gaussian();
  for (std::size_t i = 0; i < d; ++i) p.v(i) = rng.gaussian();
  p.u.normalize();
  if (orthogonal) {
    p.v -= p.u.dot(p.v) * p.u;
    p.v.normalize();
    p.v -= p.u.dot(p.v) * p.u;  // second pass
  }
  p.v.normalize();
  p.validate();
  return p;
}

void McmParams::validate() const {
  if (d < 1) throw std::invalid_argument("McmParams: d must be >= 1");
  if (static_cast<std::size_t>(u.size()) != d || static_cast<std::size_t>(v.size()) != d) {
    throw std::invalid_argument("McmParams: spike dimension mismatch");
  }
  if (!(beta_u >= 0.0) || !std::isfinite(beta_u)) throw std::invalid_argument("McmParams: beta_u must be >= 0");
  if (!(beta_v >= 0.0)) throw std::invalid_argument("McmParams: beta_v must be >= 0");
  if (beta_v > 1.0) {
    throw std::invalid_argument("McmParams: beta_v must be <= 1 so that I - beta_v v v^T is PSD");
  }
  if (!(latent_corr >= -1.0 && latent_corr <= 1.0)) {
    throw std::invalid_argument("McmParams: latent_corr must be in [-1, 1]");
  }
  if (std::abs(u.norm() - 1.0) > 1e-12 || std::abs(v.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("McmParams: spikes must have unit norm");
  }
}

void draw_latents(double latent_corr, Rng& rng, double& lambda, double& nu) {
  const double g = rng.gaussian();
  const double s = g >= 0.0 ? 1.0 : -1.0;
  const bool agree = rng.uniform() < 0.5 * (1.0 + std::abs(latent_corr));
  lambda = g;
  nu = agree ? s : -s;
  if (latent_corr < 0.0) nu = -nu;
}

McmStream::McmStream(const McmParams& p, std::uint64_t stream_seed)
    : params_(&p), rng_(stream_seed), noise_shrink_(1.0 - std::sqrt(1.0 - p.beta_v)) {
  p.validate();
}

void McmStream::next(Eigen::Ref<Vector> x) {
  double lambda = 0.0;
  double nu = 0.0;
  next(x, lambda, nu);
}

void McmStream::next(Eigen::Ref<Vector> x, double& lambda, double& nu) {
  const McmParams& p = *params_;
  draw_latents(p.latent_corr, rng_, lambda, nu);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng_.gaussian();
  if (noise_shrink_ != 0.0) {
    const double zv = p.v.dot(x);
    x.noalias() -= (noise_shrink_ * zv) * p.v;
  }
  if (p.beta_u != 0.0) x.noalias() += (std::sqrt(p.beta_u) * lambda) * p.u;
  if (p.beta_v != 0.0) x.noalias() += (std::sqrt(p.beta_v) * nu) * p.v;
  ++position_;
}

Dataset sample_mcm(const McmParams& p, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_mcm: n must be >= 1");
  McmStream stream(p, rng.bits());
  Dataset out(n, p.d);
  Vector x(p.d);
  for (std::size_t r = 0; r < n; ++r) {
    stream.next(x);
    out.row(r) = x.transpose();
  }
  return out;
}

void forward_noise_inplace(Eigen::Ref<Vector> x, const DiffusionTime& dt, Rng& rng) {
  const double a = dt.shrink();
  const double s = std::sqrt(dt.delta());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = a * x(i) + s * rng.gaussian();
}

Vector forward_noise(const Vector& x0, const DiffusionTime& dt, Rng& rng) {
  Vector x = x0;
  forward_noise_inplace(x, dt, rng);
  return x;
}

Dataset forward_noise(const Dataset& x0, const DiffusionTime& dt, Rng& rng) {
  Dataset out = x0;
  const double a = dt.shrink();
  const double s = std::sqrt(dt.delta());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = a * out(r, c) + s * rng.gaussian();
  }
  return out;
}

Moments empirical_moments(const Dataset& data) {
  const auto n = data.rows();
  if (n < 2) throw std::invalid_argument("empirical_moments: need at least 2 rows");
  Moments m;
  m.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return m;
}

Dataset make_clone(const CloneSpec& spec, std::size_t n, Rng& rng) {
  const auto d = spec.source.mean.size();
  if (d == 0) throw std::invalid_argument("make_clone: empty source moments");
  Matrix factor;
  if (spec.level == CloneLevel::mean) {
    factor = Matrix::Identity(d, d);
  } else {
    const Matrix& cov = spec.source.covariance;
    if (cov.rows() != d || cov.cols() != d) throw std::invalid_argument("make_clone: covariance shape mismatch");
    const Matrix sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success) throw std::runtime_error("make_clone: covariance factorization failed");
    const Vector vals = eig.eigenvalues().cwiseMax(spec.eigen_floor);
    if (!vals.allFinite()) throw std::runtime_error("make_clone: covariance factorization failed");
    factor = eig.eigenvectors() * vals.cwiseSqrt().asDiagonal();
  }
  Dataset out(n, d);
  Vector g(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index i = 0; i < d; ++i) g(i) = rng.gaussian();
    out.row(r) = (spec.source.mean + factor * g).transpose();
  }
  return out;
}

void export_dataset(const std::filesystem::path& path, const Dataset& data,
                    const std::string& sidecar_json) {
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("export_dataset: cannot open " + path.string());
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint64_t>(data(r, c));
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      bin.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw std::runtime_error("export_dataset: cannot open sidecar for " + path.string());
  side << sidecar_json << '\n';
}

Dataset import_dataset(const std::filesystem::path& path, std::size_t d) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("import_dataset: cannot open " + path.string());
  const auto bytes = std::filesystem::file_size(path);
  if (d == 0 || bytes % (8 * d) != 0) throw std::runtime_error("import_dataset: size is not a multiple of 8*d");
  const std::size_t n = bytes / (8 * d);
  Dataset out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      unsigned char raw[8];
      bin.read(reinterpret_cast<char*>(raw), 8);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[b]) << (8 * b);
      out(r, c) = std::bit_cast<double>(bits);
    }
  }
  return out;
}

double excess_kurtosis(const Vector& samples) {
  const double mean = samples.mean();
  const Vector c = samples.array() - mean;
  const double m2 = c.squaredNorm() / static_cast<double>(c.size());
  const double m4 = c.array().pow(4).sum() / static_cast<double>(c.size());
  return m4 / (m2 * m2) - 3.0;
}

}  // namespace cumulab
