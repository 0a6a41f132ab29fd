#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cumulab/config.hpp"

namespace cumulab {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunOptions {
  std::size_t workers = 1;
  /// Continue a previous sweep in the same directory. Fails when there is no
  /// manifest or its config hash differs.
  bool resume = false;
};

/// Raised for problems that must abort before any point is executed.
class RunSetupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  Json manifest;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // already complete from an earlier run
  /// 0 when every point is ok, 2 otherwise.
  [[nodiscard]] int exit_code() const { return failed == 0 ? 0 : 2; }
};

/// Executes all grid points of `r` into r.out, in parallel across points.
/// Writes out/points/<id>.csv, out/manifest.json, out/summary.json and a
/// recipe-specific collated CSV. Point failures are recorded, never thrown.
RunResult run_recipe(const ExperimentRecipe& r, const RunOptions& opt);

/// Result of one grid point, independent of the output directory layout.
struct PointOutcome {
  Json summary = Json::object();
  /// Per-point CSV content; empty when the recipe has no trajectory.
  std::string csv;
};
PointOutcome run_point(const std::string& recipe, const GridPoint& pt);

/// Rebuilds summary.json and the collated CSV of an existing output directory
/// from its manifest. Returns the recomputed manifest.
RunResult recollate(const std::filesystem::path& out_dir);

/// Per-recipe aggregate over the point summaries in a manifest, in grid order.
Json summarize(const std::string& recipe, const Json& points);
/// Collated CSV text (one row per point) for the recipe.
std::string collated_csv(const std::string& recipe, const Json& points);

/// Median treating missing values as +infinity; empty when the median itself
/// is censored.
std::optional<double> censored_median(std::vector<std::optional<double>> values);

/// %.17g, the formatting used for every number in the CSV outputs.
std::string format_number(double x);

}  // namespace cumulab
