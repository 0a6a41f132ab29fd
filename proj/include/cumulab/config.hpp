#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace cumulab {

using Json = nlohmann::json;

struct ConfigError {
  std::string path;    // JSON-pointer-like, e.g. "$.params.beta_v"
  std::string reason;
};

/// One grid coordinate plus replicate. `params` holds every effective value.
struct GridPoint {
  std::string id;  // stable hex hash of the coordinates and replicate
  std::size_t index = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  Json coords;
  Json params;
};

struct ExperimentRecipe {
  std::string name;
  std::uint64_t master_seed = 0;
  std::size_t seeds = 1;  // replicates per grid coordinate
  std::size_t workers = 1;
  std::string out;
  Json params = Json::object();  // fixed values with defaults filled in
  std::vector<std::pair<std::string, std::vector<Json>>> grid;

  /// Cartesian product in axis order, replicate fastest. Seeds depend only on
  /// (master_seed, coordinates, replicate), so adding grid values leaves the
  /// streams of existing points unchanged.
  [[nodiscard]] std::vector<GridPoint> points() const;
  /// Normalized JSON (excluding `out` and `workers`).
  [[nodiscard]] Json to_json() const;
  [[nodiscard]] std::string hash() const;
};

struct ValidationResult {
  std::optional<ExperimentRecipe> recipe;
  std::vector<ConfigError> errors;
  [[nodiscard]] bool ok() const { return errors.empty(); }
};

/// Parses and checks a JSON config. Unknown keys, type mismatches and
/// out-of-range values are reported with their path; nothing is accepted
/// silently.
ValidationResult validate_config(const std::string& text);
ValidationResult validate_config(const Json& doc);
inline ValidationResult validate_config(const char* text) { return validate_config(std::string(text)); }

const std::vector<std::string>& recipe_names();
/// The built-in configuration of a recipe (as JSON accepted by validate_config).
Json default_config(const std::string& recipe);

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::string stable_hash(const std::string& text);

}  // namespace cumulab
