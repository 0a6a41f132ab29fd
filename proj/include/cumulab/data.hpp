#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cumulab/random.hpp"

namespace cumulab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// n x d, one sample per row.
using Dataset = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Forward Ornstein-Uhlenbeck time: x_t = e^{-t} x_0 + sqrt(delta) z.
class DiffusionTime {
 public:
  explicit DiffusionTime(double t);
  /// The time with e^{-t} = shrink, shrink in (0, 1].
  static DiffusionTime from_shrink(double shrink);

  [[nodiscard]] double t() const { return t_; }
  [[nodiscard]] double shrink() const { return shrink_; }
  [[nodiscard]] double delta() const { return delta_; }

 private:
  double t_;
  double shrink_;
  double delta_;
};

/// Harness default for fixed-noise experiments: e^{-t} = 0.8.
inline DiffusionTime default_diffusion_time() { return DiffusionTime::from_shrink(0.8); }

/// Mixed cumulant model x = sqrt(beta_u) lambda u + sqrt(beta_v) nu v + z,
/// lambda ~ N(0,1), nu ~ Rademacher, z ~ N(0, I - beta_v v v^T).
struct McmParams {
  std::size_t d = 0;
  double beta_u = 0.0;
  double beta_v = 0.0;
  Vector u;
  Vector v;
  /// Controls E[lambda nu] = latent_corr * sqrt(2/pi); marginals are exact.
  double latent_corr = 0.0;
  std::uint64_t seed = 0;

  /// Draws u, v from Gaussian vectors seeded by `seed`; Gram-Schmidt when
  /// `orthogonal` is set, otherwise independently normalized.
  static McmParams make(std::size_t d, double beta_u, double beta_v, double latent_corr,
                        std::uint64_t seed, bool orthogonal = true);

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

/// One clean MCM sample per call. Stream position counts consumed samples.
class McmStream {
 public:
  McmStream(const McmParams& p, std::uint64_t stream_seed);

  void next(Eigen::Ref<Vector> x);
  /// Also reports the latent pair used for the sample.
  void next(Eigen::Ref<Vector> x, double& lambda, double& nu);
  [[nodiscard]] std::uint64_t position() const { return position_; }
  Rng& rng() { return rng_; }

 private:
  const McmParams* params_;
  Rng rng_;
  std::uint64_t position_ = 0;
  double noise_shrink_;  // 1 - sqrt(1 - beta_v)
};

/// Latent pair with exact marginals; see McmParams::latent_corr.
void draw_latents(double latent_corr, Rng& rng, double& lambda, double& nu);

Dataset sample_mcm(const McmParams& p, std::size_t n, Rng& rng);

/// e^{-t} x0 + sqrt(delta) z with fresh z.
Vector forward_noise(const Vector& x0, const DiffusionTime& dt, Rng& rng);
void forward_noise_inplace(Eigen::Ref<Vector> x, const DiffusionTime& dt, Rng& rng);
Dataset forward_noise(const Dataset& x0, const DiffusionTime& dt, Rng& rng);

struct Moments {
  Vector mean;
  Matrix covariance;  // unbiased
};
Moments empirical_moments(const Dataset& data);

enum class CloneLevel { mean, mean_cov };

struct CloneSpec {
  CloneLevel level = CloneLevel::mean_cov;
  Moments source;
  double eigen_floor = 1e-12;
};

/// Gaussian surrogate with the source mean and identity (level mean) or
/// source (level mean_cov) covariance. Throws std::runtime_error if the
/// floored covariance cannot be factorized.
Dataset make_clone(const CloneSpec& spec, std::size_t n, Rng& rng);

/// Little-endian float64 rows + "<path>.json" sidecar.
void export_dataset(const std::filesystem::path& path, const Dataset& data,
                    const std::string& sidecar_json);
Dataset import_dataset(const std::filesystem::path& path, std::size_t d);

double excess_kurtosis(const Vector& samples);

}  // namespace cumulab
