// cumulab command-line front end. Exit codes: 0 ok, 1 config error, 2 partial failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cumulab/config.hpp"
#include "cumulab/recipes.hpp"

namespace {

using cumulab::Json;

struct CommonFlags {
  std::string config;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool resume = false;
  bool dry_run = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--workers", f.workers, "parallel grid points (overrides config)")->check(CLI::PositiveNumber);
  sub->add_option_function<std::uint64_t>(
      "--seed", [&f](const std::uint64_t& s) { f.seed = s, f.seed_set = true; }, "master seed (overrides config)");
  sub->add_option("--out", f.out, "output directory (overrides config)");
  sub->add_flag("--resume", f.resume, "continue the sweep recorded in the output directory");
  sub->add_flag("--dry-run", f.dry_run, "validate and print the normalized config without running");
}

int config_error(const std::vector<cumulab::ConfigError>& errors) {
  for (const auto& e : errors) std::cerr << "config error: " << e.path << ": " << e.reason << "\n";
  return 1;
}

// Builds the config document from --config or the recipe default, applies the
// flag overrides and validates it.
int run(const std::string& command, const CommonFlags& f, const std::set<std::string>& allowed,
        const std::string& default_recipe) {
  Json doc;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) return config_error({{"--config", "cannot open '" + f.config + "'"}});
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      doc = Json::parse(ss.str());
    } catch (const std::exception& e) {
      return config_error({{"$", std::string("invalid JSON: ") + e.what()}});
    }
  } else if (!default_recipe.empty()) {
    doc = cumulab::default_config(default_recipe);
  } else {
    return config_error({{"--config", command + " requires --config"}});
  }
  if (f.seed_set && doc.is_object()) doc["seed"] = f.seed;
  if (f.workers > 0 && doc.is_object()) doc["workers"] = f.workers;
  if (!f.out.empty() && doc.is_object()) doc["out"] = f.out;

  auto res = cumulab::validate_config(doc);
  if (!res.ok()) return config_error(res.errors);
  auto recipe = *res.recipe;
  if (!allowed.empty() && !allowed.count(recipe.name)) {
    return config_error({{"$.recipe", "recipe '" + recipe.name + "' cannot be run by '" + command + "'"}});
  }
  if (recipe.out.empty()) recipe.out = "runs/" + recipe.name;

  if (f.dry_run) {
    Json shown = recipe.to_json();
    shown["points"] = recipe.points().size();
    shown["config_hash"] = recipe.hash();
    shown["out"] = recipe.out;
    std::cout << shown.dump(2) << "\n";
    return 0;
  }
  try {
    const auto result = cumulab::run_recipe(recipe, {recipe.workers, f.resume});
    std::cout << result.manifest["summary"].dump(2) << "\n";
    std::cerr << recipe.name << ": " << result.ok << " ok, " << result.failed << " failed, " << result.skipped
              << " reused from " << recipe.out << "\n";
    for (const auto& pt : result.manifest["points"]) {
      if (pt["status"] != "ok") std::cerr << "  point " << pt["id"].get<std::string>() << " " << pt["coords"].dump()
                                          << ": " << (pt["error"].is_string() ? pt["error"].get<std::string>() : "") << "\n";
    }
    return result.exit_code();
  } catch (const cumulab::RunSetupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cumulab: diffusion denoiser learning experiments on the mixed cumulant model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cumulab::kToolVersion);

  CommonFlags f;
  auto* lambda = app.add_subcommand("lambda-scan", "contraction invariant over activations, times and weight norms");
  auto* audit = app.add_subcommand("hermite-audit", "Hermite identities and the c4 coefficient resolution");
  auto* train = app.add_subcommand("train", "run a training recipe from --config");
  auto* sweep = app.add_subcommand("sweep", "run any recipe from --config");
  auto* clone = app.add_subcommand("clone-eval", "tied autoencoder losses on real data versus Gaussian clones");
  auto* report = app.add_subcommand("report", "re-summarize an existing output directory from its manifest");
  for (auto* s : {lambda, audit, train, sweep, clone}) add_common(s, f);
  report->add_option("--out", f.out, "output directory holding manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (lambda->parsed()) return run("lambda-scan", f, {"lambda-scan"}, "lambda-scan");
  if (audit->parsed()) return run("hermite-audit", f, {"hermite-audit"}, "hermite-audit");
  if (clone->parsed()) return run("clone-eval", f, {"clone-eval"}, "clone-eval");
  if (train->parsed()) {
    return run("train", f,
               {"psgd-wishart", "psgd-cumulant-scaling", "mcm-simplicity", "sgd-contraction", "clone-eval", "overparam"},
               "");
  }
  if (sweep->parsed()) return run("sweep", f, {}, "");
  if (report->parsed()) {
    try {
      const auto result = cumulab::recollate(f.out);
      std::cout << result.manifest["summary"].dump(2) << "\n";
      return result.exit_code();
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
