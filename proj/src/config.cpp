#include "cumulab/config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cumulab/activation.hpp"
#include "cumulab/random.hpp"

namespace cumulab {

namespace {

enum class Kind { integer, number, boolean, string };

struct KeySpec {
  Kind kind;
  std::function<std::optional<std::string>(const Json&)> check;
};

using Check = std::function<std::optional<std::string>(const Json&)>;

Check at_least(double lo) {
  return [lo](const Json& v) -> std::optional<std::string> {
    if (v.get<double>() < lo) return "must be >= " + Json(lo).dump();
    return std::nullopt;
  };
}

Check above(double lo) {
  return [lo](const Json& v) -> std::optional<std::string> {
    if (!(v.get<double>() > lo)) return "must be > " + Json(lo).dump();
    return std::nullopt;
  };
}

Check within(double lo, double hi, bool open_lo = false, bool open_hi = false) {
  return [=](const Json& v) -> std::optional<std::string> {
    const double x = v.get<double>();
    const bool ok_lo = open_lo ? x > lo : x >= lo;
    const bool ok_hi = open_hi ? x < hi : x <= hi;
    if (ok_lo && ok_hi) return std::nullopt;
    std::ostringstream os;
    os << "must be in " << (open_lo ? "(" : "[") << lo << ", " << hi << (open_hi ? ")" : "]");
    return os.str();
  };
}

Check one_of(std::vector<std::string> options) {
  return [options](const Json& v) -> std::optional<std::string> {
    const auto s = v.get<std::string>();
    for (const auto& o : options) {
      if (s == o) return std::nullopt;
    }
    std::string msg = "must be one of";
    for (const auto& o : options) msg += " '" + o + "'";
    return msg;
  };
}

const std::map<std::string, KeySpec>& vocabulary() {
  static const std::map<std::string, KeySpec> v = {
      {"d", {Kind::integer, at_least(2)}},
      {"beta_u", {Kind::number, at_least(0.0)}},
      {"beta_v",
       {Kind::number,
        [](const Json& j) -> std::optional<std::string> {
          const double x = j.get<double>();
          if (x < 0.0) return "must be >= 0";
          if (x > 1.0) return "must be <= 1 so that the noise covariance I - beta_v v v^T is PSD";
          return std::nullopt;
        }}},
      {"latent_corr", {Kind::number, within(-1.0, 1.0)}},
      {"orthogonal", {Kind::boolean, nullptr}},
      {"t", {Kind::number, at_least(0.0)}},
      {"activation",
       {Kind::string,
        [](const Json& j) -> std::optional<std::string> {
          try {
            (void)Activation::parse(j.get<std::string>(), DiffusionTime(1.0));
          } catch (const std::exception& e) {
            return std::string("invalid activation: ") + e.what();
          }
          return std::nullopt;
        }}},
      {"mode", {Kind::string, one_of({"projected", "plain", "adam"})}},
      {"eta", {Kind::number, at_least(0.0)}},
      {"eta_rule", {Kind::string, one_of({"fixed", "inv_sqrt_nd", "inv_d2"})}},
      {"eta_scale", {Kind::number, above(0.0)}},
      {"steps", {Kind::integer, at_least(0)}},
      {"budget_rule", {Kind::string, one_of({"fixed", "d_log2d", "d_cubed"})}},
      {"budget_multiplier", {Kind::number, above(0.0)}},
      {"record_stride", {Kind::integer, at_least(1)}},
      {"recovery_threshold", {Kind::number, within(0.0, 1.0, true, true)}},
      {"success_threshold", {Kind::number, within(0.0, 1.0, true, false)}},
      {"sign_condition", {Kind::boolean, nullptr}},
      {"init", {Kind::string, one_of({"uniform", "inv_sqrt_d"})}},
      {"init_norm", {Kind::number, above(0.0)}},
      {"stop_on", {Kind::string, one_of({"", "u", "v", "both"})}},
      {"train_skip", {Kind::boolean, nullptr}},
      {"width", {Kind::integer, at_least(1)}},
      {"batch", {Kind::integer, at_least(1)}},
      {"init_scale", {Kind::number, above(0.0)}},
      {"eval_rows", {Kind::integer, at_least(2)}},
      {"eval_every", {Kind::integer, at_least(0)}},
      {"z_samples", {Kind::integer, at_least(1)}},
      {"wnorm", {Kind::number, within(0.0, 10.0, true, false)}},
      {"c2L", {Kind::number, above(-1.0)}},
      {"K", {Kind::integer, within(1, 40)}},
      {"nodes", {Kind::integer, at_least(2)}},
      {"slack_scale", {Kind::number, above(0.0)}},
  };
  return v;
}

const double kDefaultT = std::log(1.25);  // e^{-t} = 0.8

// Defaults double as the per-recipe whitelist of parameter keys.
const std::map<std::string, Json>& recipe_defaults() {
  static const std::map<std::string, Json> r = {
      {"lambda-scan", Json{{"activation", "matched"}, {"t", 0.5}, {"wnorm", 1.0}, {"c2L", 0.0}, {"nodes", 3201}}},
      {"hermite-audit", Json{{"t", 0.5}, {"K", 12}, {"nodes", 200}}},
      {"psgd-wishart",
       Json{{"d", 64}, {"beta_u", 2.0}, {"beta_v", 0.0}, {"latent_corr", 0.0}, {"orthogonal", true},
            {"t", kDefaultT}, {"activation", "neg_identity"}, {"eta_rule", "inv_sqrt_nd"}, {"eta_scale", 1.0},
            {"eta", 0.0}, {"budget_rule", "d_log2d"}, {"budget_multiplier", 20.0}, {"steps", 0},
            {"record_stride", 100}, {"recovery_threshold", 0.5}, {"success_threshold", 0.9},
            {"init", "uniform"}, {"sign_condition", false}}},
      {"psgd-cumulant-scaling",
       Json{{"d", 16}, {"beta_u", 0.0}, {"beta_v", 1.0}, {"latent_corr", 0.0}, {"orthogonal", true},
            {"t", kDefaultT}, {"activation", "neg_tanh"}, {"eta_rule", "inv_d2"}, {"eta_scale", 0.1},
            {"eta", 0.0}, {"budget_rule", "d_cubed"}, {"budget_multiplier", 3000.0}, {"steps", 0},
            {"record_stride", 1000}, {"recovery_threshold", 0.5}, {"init", "inv_sqrt_d"}, {"stop_on", "v"}}},
      {"mcm-simplicity",
       Json{{"d", 100}, {"beta_u", 4.0}, {"beta_v", 1.0}, {"latent_corr", 0.0}, {"orthogonal", true},
            {"t", kDefaultT}, {"activation", "neg_tanh"}, {"eta_rule", "inv_sqrt_nd"}, {"eta_scale", 1.0},
            {"eta", 0.0}, {"budget_rule", "d_log2d"}, {"budget_multiplier", 20.0}, {"steps", 0},
            {"record_stride", 100}, {"recovery_threshold", 0.5}, {"init", "uniform"}, {"sign_condition", false}}},
      {"sgd-contraction",
       Json{{"d", 1000}, {"beta_u", 0.0}, {"beta_v", 1.0}, {"latent_corr", 0.0}, {"orthogonal", true}, {"t", 0.5},
            {"activation", "matched"}, {"eta_rule", "fixed"}, {"eta", 1e-3}, {"eta_scale", 1.0},
            {"budget_rule", "fixed"}, {"budget_multiplier", 1.0}, {"steps", 20000}, {"record_stride", 100},
            {"init_norm", 1.0}, {"train_skip", false}, {"slack_scale", 5.0}}},
      {"clone-eval",
       Json{{"d", 100}, {"beta_u", 100.0}, {"beta_v", 1.0}, {"latent_corr", 0.0}, {"orthogonal", true},
            {"t", kDefaultT}, {"activation", "neg_tanh"}, {"eta", 1e-3}, {"steps", 30000}, {"width", 10},
            {"batch", 100}, {"init_scale", 1.0}, {"eval_rows", 4000}, {"eval_every", 1000}, {"z_samples", 1},
            {"record_stride", 1000}, {"recovery_threshold", 0.5}}},
      {"overparam",
       Json{{"d", 100}, {"beta_u", 0.0}, {"beta_v", 1.0}, {"latent_corr", 0.0}, {"orthogonal", true},
            {"t", kDefaultT}, {"activation", "smoothed_relu:10"}, {"eta", 1e-4}, {"steps", 100000}, {"width", 100},
            {"batch", 100}, {"init_scale", 1.0}, {"record_stride", 1000}, {"recovery_threshold", 0.5},
            {"stop_on", "v"}}},
  };
  return r;
}

Json make_grid(std::initializer_list<std::pair<const char*, Json>> axes) {
  Json g = Json::object();
  for (const auto& [k, v] : axes) g[k] = v;
  return g;
}

bool kind_matches(Kind k, const Json& v) {
  switch (k) {
    case Kind::integer: return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    case Kind::number: return v.is_number();
    case Kind::boolean: return v.is_boolean();
    case Kind::string: return v.is_string();
  }
  return false;
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::integer: return "an integer";
    case Kind::number: return "a number";
    case Kind::boolean: return "a boolean";
    case Kind::string: return "a string";
  }
  return "?";
}

void check_value(const std::string& key, const Json& v, const std::string& path, std::vector<ConfigError>& errors) {
  const auto& spec = vocabulary().at(key);
  if (!kind_matches(spec.kind, v)) {
    errors.push_back({path, std::string("must be ") + kind_name(spec.kind)});
    return;
  }
  if (spec.check) {
    if (auto why = spec.check(v)) errors.push_back({path, *why});
  }
}

Json normalize(const std::string& key, const Json& v) {
  if (vocabulary().at(key).kind == Kind::integer && v.is_number_float()) return Json(static_cast<std::int64_t>(v.get<double>()));
  return v;
}

}  // namespace

std::string stable_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names = {"lambda-scan", "hermite-audit", "psgd-wishart",
                                                 "psgd-cumulant-scaling", "mcm-simplicity", "sgd-contraction",
                                                 "clone-eval", "overparam"};
  return names;
}

Json default_config(const std::string& recipe) {
  Json c;
  c["recipe"] = recipe;
  c["seed"] = 20240601;
  c["params"] = Json::object();
  if (recipe == "lambda-scan") {
    c["grid"] = make_grid({{"activation", Json::array({"matched", "scaled_neg_tanh:10", "neg_tanh", "smoothed_relu:10", "smoothed_relu_sq:10"})},
                           {"t", Json::array({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0})},
                           {"wnorm", Json::array({0.25, 0.5, 0.75, 1.0})}});
  } else if (recipe == "hermite-audit") {
    c["grid"] = make_grid({{"t", Json::array({0.25, 0.5})}});
  } else if (recipe == "psgd-wishart") {
    c["seeds"] = 10;
    c["grid"] = make_grid({{"d", Json::array({64, 128, 256})}});
  } else if (recipe == "psgd-cumulant-scaling") {
    c["seeds"] = 20;
    c["grid"] = make_grid({{"d", Json::array({8, 12, 16, 24, 32})}});
  } else if (recipe == "mcm-simplicity") {
    c["seeds"] = 10;
    c["grid"] = make_grid({{"latent_corr", Json::array({0.0, 1.0})}});
  } else if (recipe == "sgd-contraction") {
    c["seeds"] = 10;
    c["grid"] = make_grid({{"activation", Json::array({"matched"})}});
  } else if (recipe == "clone-eval") {
    c["seeds"] = 5;
    c["grid"] = make_grid({{"width", Json::array({10})}});
  } else if (recipe == "overparam") {
    c["seeds"] = 5;
    c["grid"] = make_grid({{"width", Json::array({1, 100})}});
  } else {
    throw std::invalid_argument("unknown recipe '" + recipe + "'");
  }
  return c;
}

ValidationResult validate_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const std::exception& e) {
    ValidationResult r;
    r.errors.push_back({"$", std::string("invalid JSON: ") + e.what()});
    return r;
  }
  return validate_config(doc);
}

ValidationResult validate_config(const Json& doc) {
  ValidationResult res;
  auto& errors = res.errors;
  if (!doc.is_object()) {
    errors.push_back({"$", "config must be a JSON object"});
    return res;
  }
  static const std::set<std::string> top = {"recipe", "seed", "seeds", "workers", "out", "params", "grid"};
  for (const auto& [k, v] : doc.items()) {
    if (!top.count(k)) errors.push_back({"$." + k, "unknown key"});
  }

  ExperimentRecipe r;
  if (!doc.contains("recipe") || !doc["recipe"].is_string()) {
    errors.push_back({"$.recipe", "required string naming one of the recipes"});
    return res;
  }
  r.name = doc["recipe"].get<std::string>();
  const auto& defaults = recipe_defaults();
  const auto it = defaults.find(r.name);
  if (it == defaults.end()) {
    errors.push_back({"$.recipe", "unknown recipe '" + r.name + "'"});
    return res;
  }
  const Json& allowed = it->second;

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<std::int64_t>() >= 0)) {
      errors.push_back({"$.seed", "must be a non-negative integer"});
    } else {
      r.master_seed = doc["seed"].get<std::uint64_t>();
    }
  }
  auto positive_int = [&](const char* key, std::size_t& dst) {
    if (!doc.contains(key)) return;
    const Json& v = doc[key];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
      errors.push_back({std::string("$.") + key, "must be an integer >= 1"});
    } else {
      dst = v.get<std::size_t>();
    }
  };
  positive_int("seeds", r.seeds);
  positive_int("workers", r.workers);
  if (doc.contains("out")) {
    if (!doc["out"].is_string() || doc["out"].get<std::string>().empty()) {
      errors.push_back({"$.out", "must be a non-empty string"});
    } else {
      r.out = doc["out"].get<std::string>();
    }
  }

  r.params = allowed;
  std::set<std::string> fixed_keys;
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) {
      errors.push_back({"$.params", "must be an object"});
    } else {
      for (const auto& [k, v] : doc["params"].items()) {
        const std::string path = "$.params." + k;
        if (!allowed.contains(k)) {
          errors.push_back({path, "unknown key for recipe '" + r.name + "'"});
          continue;
        }
        check_value(k, v, path, errors);
        r.params[k] = normalize(k, v);
        fixed_keys.insert(k);
      }
    }
  }

  if (!doc.contains("grid")) {
    errors.push_back({"$.grid", "grid must be non-empty"});
  } else if (!doc["grid"].is_object()) {
    errors.push_back({"$.grid", "must be an object mapping parameter names to value lists"});
  } else if (doc["grid"].empty()) {
    errors.push_back({"$.grid", "grid must be non-empty"});
  } else {
    for (const auto& [k, v] : doc["grid"].items()) {
      const std::string path = "$.grid." + k;
      if (!allowed.contains(k)) {
        errors.push_back({path, "unknown key for recipe '" + r.name + "'"});
        continue;
      }
      if (fixed_keys.count(k)) {
        errors.push_back({path, "also set in params; a key is either fixed or swept"});
        continue;
      }
      if (!v.is_array() || v.empty()) {
        errors.push_back({path, "grid must be non-empty: expected a non-empty list of values"});
        continue;
      }
      std::vector<Json> values;
      for (std::size_t i = 0; i < v.size(); ++i) {
        check_value(k, v[i], path + "[" + std::to_string(i) + "]", errors);
        values.push_back(normalize(k, v[i]));
      }
      r.grid.emplace_back(k, std::move(values));
    }
  }

  if (errors.empty()) {
    // Cross-field checks on every effective point.
    for (const auto& pt : r.points()) {
      const Json& p = pt.params;
      if (p.contains("activation") && p.contains("t")) {
        try {
          (void)Activation::parse(p["activation"].get<std::string>(), DiffusionTime(p["t"].get<double>()));
        } catch (const std::exception& e) {
          errors.push_back({"$.grid", "point " + pt.coords.dump() + ": " + e.what()});
        }
      }
      if (p.contains("mode") && p["mode"] == "adam") {
        errors.push_back({"$.params.mode", "adam runs use the clone-eval or overparam recipes"});
      }
      if (errors.size() > 20) break;
    }
  }
  if (errors.empty()) res.recipe = std::move(r);
  return res;
}

std::vector<GridPoint> ExperimentRecipe::points() const {
  std::vector<GridPoint> out;
  std::vector<std::size_t> idx(grid.size(), 0);
  std::size_t flat = 0;
  while (true) {
    Json coords = Json::object();
    for (std::size_t a = 0; a < grid.size(); ++a) coords[grid[a].first] = grid[a].second[idx[a]];
    for (std::size_t rep = 0; rep < seeds; ++rep) {
      GridPoint p;
      p.index = flat++;
      p.replicate = rep;
      p.coords = coords;
      p.params = params;
      for (const auto& [k, v] : coords.items()) p.params[k] = v;
      const std::string key = coords.dump() + "#" + std::to_string(rep);
      p.id = stable_hash(name + "|" + key);
      p.seed = derive_seed(master_seed, std::stoull(p.id, nullptr, 16));
      out.push_back(std::move(p));
    }
    std::size_t a = grid.size();
    while (a > 0) {
      --a;
      if (++idx[a] < grid[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
    if (grid.empty()) return out;
  }
}

Json ExperimentRecipe::to_json() const {
  Json j;
  j["recipe"] = name;
  j["seed"] = master_seed;
  j["seeds"] = seeds;
  Json fixed = params;
  Json g = Json::object();
  for (const auto& [k, vals] : grid) {
    g[k] = vals;
    fixed.erase(k);
  }
  j["params"] = fixed;
  j["grid"] = g;
  return j;
}

std::string ExperimentRecipe::hash() const { return stable_hash(to_json().dump()); }

}  // namespace cumulab
