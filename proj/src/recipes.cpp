#include "cumulab/recipes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cumulab/analytics.hpp"
#include "cumulab/hermite.hpp"
#include "cumulab/trainer.hpp"

namespace cumulab {

namespace fs = std::filesystem;

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::optional<double> censored_median(std::vector<std::optional<double>> values) {
  if (values.empty()) return std::nullopt;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const auto& x : values) v.push_back(x.value_or(inf));
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (!std::isfinite(med)) return std::nullopt;
  return med;
}

namespace {

Json opt_json(const std::optional<std::size_t>& x) { return x ? Json(*x) : Json(nullptr); }

std::string trajectory_csv(const Trajectory& traj, const std::vector<std::string>& loss_names) {
  std::ostringstream os;
  os << "step,alpha_u,alpha_v,wnorm,skip_b";
  for (const auto& n : loss_names) os << "," << n;
  os << "\n";
  for (const auto& r : traj.records) {
    os << r.step << "," << format_number(r.alpha_u) << "," << format_number(r.alpha_v) << ","
       << format_number(r.wnorm) << "," << format_number(r.skip_b);
    for (std::size_t i = 0; i < loss_names.size(); ++i) {
      os << ",";
      if (i < r.losses.size()) os << format_number(r.losses[i]);
    }
    os << "\n";
  }
  return os.str();
}

std::size_t budget_steps(const Json& P) {
  const auto d = static_cast<double>(P["d"].get<std::size_t>());
  const std::string rule = P.value("budget_rule", std::string("fixed"));
  const double mult = P.value("budget_multiplier", 1.0);
  if (rule == "d_log2d") return static_cast<std::size_t>(std::ceil(mult * d * std::log(d) * std::log(d)));
  if (rule == "d_cubed") return static_cast<std::size_t>(std::ceil(mult * d * d * d));
  return P["steps"].get<std::size_t>();
}

double learning_rate(const Json& P, std::size_t steps) {
  const auto d = static_cast<double>(P["d"].get<std::size_t>());
  const std::string rule = P.value("eta_rule", std::string("fixed"));
  const double scale = P.value("eta_scale", 1.0);
  if (rule == "inv_sqrt_nd") return scale / std::sqrt(static_cast<double>(steps) * d);
  if (rule == "inv_d2") return scale / (d * d);
  return P["eta"].get<double>();
}

McmParams make_data(const Json& P, std::uint64_t seed) {
  return McmParams::make(P["d"].get<std::size_t>(), P["beta_u"].get<double>(), P["beta_v"].get<double>(),
                         P["latent_corr"].get<double>(), derive_seed(seed, 100), P["orthogonal"].get<bool>());
}

PointOutcome lambda_scan_point(const Json& P) {
  const DiffusionTime dt(P["t"].get<double>());
  const Activation act = Activation::parse(P["activation"].get<std::string>(), dt);
  const auto lc = lambda_invariant(act, P["c2L"].get<double>(), P["wnorm"].get<double>(),
                                   fine_trapezoid(P["nodes"].get<int>()));
  PointOutcome out;
  out.summary = {{"c1_Ftilde", lc.c1_Ftilde}, {"c0_G", lc.c0_G}, {"c2L", lc.c2L}, {"lambda", lc.lambda}};
  return out;
}

PointOutcome hermite_audit_point(const Json& P) {
  const DiffusionTime dt(P["t"].get<double>());
  const auto audit = hermite_audit(P["K"].get<int>(), P["nodes"].get<int>(), 6, dt.shrink());
  const auto c4 = resolve_c4(dt);
  PointOutcome out;
  out.summary = {{"orthogonality_error", audit.orthogonality},
                 {"recurrence_residual", audit.recurrence},
                 {"mehler_error", audit.mehler},
                 {"c4_oracle", c4.oracle},
                 {"c4_cumulant_formula", c4.cumulant_formula},
                 {"c4_semigroup", c4.semigroup},
                 {"c4_matches", c4.matches}};
  return out;
}

Json online_summary(const Trajectory& traj, double iota) {
  const auto& last = traj.records.back();
  return {{"final_alpha_u", last.alpha_u},
          {"final_alpha_v", last.alpha_v},
          {"final_wnorm", last.wnorm},
          {"max_abs_alpha_u", traj.max_abs_alpha_u()},
          {"max_abs_alpha_v", traj.max_abs_alpha_v()},
          {"recovery_time_u", opt_json(weak_recovery_time(traj, Spike::u, iota))},
          {"recovery_time_v", opt_json(weak_recovery_time(traj, Spike::v, iota))},
          {"samples", traj.samples_consumed}};
}

PointOutcome projected_point(const std::string& recipe, const Json& P, const GridPoint& pt) {
  const McmParams p = make_data(P, pt.seed);
  const DiffusionTime dt(P["t"].get<double>());
  const Activation act = Activation::parse(P["activation"].get<std::string>(), dt);
  TrainConfig cfg;
  cfg.mode = TrainMode::projected;
  cfg.steps = budget_steps(P);
  cfg.eta = learning_rate(P, cfg.steps);
  cfg.record_stride = P["record_stride"].get<std::size_t>();
  cfg.recovery_threshold = P["recovery_threshold"].get<double>();
  cfg.dt = dt;
  cfg.seed = derive_seed(pt.seed, 101);
  cfg.sign_condition = P.value("sign_condition", false);
  // The correlated arm of the simplicity-bias experiment is defined with the
  // sign-conditioned initialization.
  if (recipe == "mcm-simplicity" && p.latent_corr != 0.0) cfg.sign_condition = true;
  cfg.stop_on = P.value("stop_on", std::string());

  Trajectory traj;
  if (P.value("init", std::string("uniform")) == "inv_sqrt_d") {
    Rng init(derive_seed(cfg.seed, 0));
    const Spike which = cfg.stop_on == "u" ? Spike::u : Spike::v;
    const Vector w0 = initial_with_overlap(p, which, 1.0 / std::sqrt(static_cast<double>(p.d)), init);
    traj = train_online(p, cfg, act, w0);
  } else {
    traj = train_online(p, cfg, act);
  }
  PointOutcome out;
  out.summary = online_summary(traj, cfg.recovery_threshold);
  out.summary["eta"] = cfg.eta;
  out.summary["budget"] = cfg.steps;
  out.summary["sign_condition"] = cfg.sign_condition;
  if (P.contains("success_threshold")) {
    out.summary["success"] = std::abs(traj.records.back().alpha_u) >= P["success_threshold"].get<double>();
  }
  out.csv = trajectory_csv(traj, {});
  return out;
}

PointOutcome contraction_point(const Json& P, const GridPoint& pt) {
  const McmParams p = make_data(P, pt.seed);
  const DiffusionTime dt(P["t"].get<double>());
  const Activation act = Activation::parse(P["activation"].get<std::string>(), dt);
  TrainConfig cfg;
  cfg.mode = TrainMode::plain;
  cfg.steps = budget_steps(P);
  cfg.eta = learning_rate(P, cfg.steps);
  cfg.record_stride = P["record_stride"].get<std::size_t>();
  cfg.dt = dt;
  cfg.seed = derive_seed(pt.seed, 101);
  cfg.init_norm = P["init_norm"].get<double>();
  cfg.train_skip = P["train_skip"].get<bool>();

  const double c2L = likelihood_table(p, dt, 2)(0, 2);
  const auto lc = lambda_invariant(act, c2L, cfg.init_norm);
  const double gamma = 1.0 - cfg.eta * std::abs(lc.lambda) / 2.0;
  const double slack = P["slack_scale"].get<double>() / std::sqrt(static_cast<double>(p.d));

  PointOutcome out;
  out.summary = {{"lambda", lc.lambda}, {"gamma", gamma}, {"slack", slack}};
  Trajectory traj;
  try {
    traj = train_online(p, cfg, act);
  } catch (const DivergenceError& e) {
    throw std::runtime_error(std::string(e.what()) + " (lambda=" + format_number(lc.lambda) + ")");
  }
  const auto rep = contraction_check(traj, gamma, slack);
  out.summary.update(online_summary(traj, cfg.recovery_threshold));
  out.summary["contraction_pass"] = rep.pass;
  out.summary["first_violation"] = opt_json(rep.first_violation);
  out.summary["detail"] = rep.detail;
  out.csv = trajectory_csv(traj, {});
  return out;
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// First evaluation step from which the series stays within `tol` (relative)
// of its final value.
std::optional<std::size_t> plateau_step(const std::vector<std::pair<std::size_t, double>>& series, double tol) {
  if (series.empty()) return std::nullopt;
  const double fin = series.back().second;
  std::optional<std::size_t> at;
  for (const auto& [step, v] : series) {
    if (rel_gap(v, fin) <= tol) {
      if (!at) at = step;
    } else {
      at.reset();
    }
  }
  return at;
}

PointOutcome tied_point(const std::string& recipe, const Json& P, const GridPoint& pt) {
  const McmParams p = make_data(P, pt.seed);
  const DiffusionTime dt(P["t"].get<double>());
  const Activation act = Activation::parse(P["activation"].get<std::string>(), dt);
  TrainConfig cfg;
  cfg.mode = TrainMode::adam;
  cfg.steps = P["steps"].get<std::size_t>();
  cfg.eta = P["eta"].get<double>();
  cfg.record_stride = P["record_stride"].get<std::size_t>();
  cfg.recovery_threshold = P["recovery_threshold"].get<double>();
  cfg.dt = dt;
  cfg.seed = derive_seed(pt.seed, 101);
  cfg.stop_on = P.value("stop_on", std::string());

  Rng init(derive_seed(pt.seed, 102));
  const auto ae = TiedAutoencoder::random(P["width"].get<std::size_t>(), p.d, P["init_scale"].get<double>(), init);

  const bool with_clones = recipe == "clone-eval";
  Dataset real, mean_clone, meancov_clone;
  LossProbe probe;
  std::vector<std::string> loss_names;
  if (with_clones) {
    Rng er(derive_seed(pt.seed, 103));
    const auto rows = P["eval_rows"].get<std::size_t>();
    real = sample_mcm(p, rows, er);
    const Moments mom = empirical_moments(real);
    mean_clone = make_clone({CloneLevel::mean, mom}, rows, er);
    meancov_clone = make_clone({CloneLevel::mean_cov, mom}, rows, er);
    probe.sets = {&real, &mean_clone, &meancov_clone};
    probe.z_samples = P["z_samples"].get<std::size_t>();
    probe.every = P["eval_every"].get<std::size_t>();
    loss_names = {"loss_real", "loss_clone_mean", "loss_clone_meancov"};
  }
  const Trajectory traj = train_tied_adam(p, ae, cfg, act, P["batch"].get<std::size_t>(), probe);

  PointOutcome out;
  out.summary = online_summary(traj, cfg.recovery_threshold);
  if (with_clones) {
    const auto tv = weak_recovery_time(traj, Spike::v, cfg.recovery_threshold);
    std::vector<std::pair<std::size_t, double>> s_real, s_mean;
    double before = 0.0;
    std::optional<double> after;
    double first_gap = 0.0, final_gap = 0.0;
    bool first = true;
    for (const auto& r : traj.records) {
      if (r.losses.size() != 3) continue;
      const double g = rel_gap(r.losses[0], r.losses[2]);
      if (first) first_gap = g;
      first = false;
      final_gap = g;
      s_real.emplace_back(r.step, r.losses[0]);
      s_mean.emplace_back(r.step, r.losses[1]);
      if (!tv || r.step < *tv) {
        before = std::max(before, g);
      } else {
        after = after ? std::min(*after, g) : g;
      }
    }
    out.summary["gap_meancov_first"] = first_gap;
    out.summary["gap_meancov_final"] = final_gap;
    out.summary["gap_meancov_max_before_v"] = before;
    out.summary["gap_meancov_min_after_v"] = after ? Json(*after) : Json(nullptr);
    out.summary["plateau_step_real"] = opt_json(plateau_step(s_real, 0.01));
    out.summary["plateau_step_mean_clone"] = opt_json(plateau_step(s_mean, 0.01));
    if (!s_real.empty()) {
      out.summary["final_loss_real"] = s_real.back().second;
      out.summary["final_loss_clone_mean"] = s_mean.back().second;
      out.summary["final_loss_clone_meancov"] = traj.records.back().losses.size() == 3
                                                    ? Json(traj.records.back().losses[2])
                                                    : Json(nullptr);
    }
  }
  out.csv = trajectory_csv(traj, loss_names);
  return out;
}

// ---------------------------------------------------------------------------
// Output plumbing.

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string csv_cell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return csv_cell(Json(v.dump()));
}

std::string collated_name(const std::string& recipe) {
  std::string s = recipe;
  std::replace(s.begin(), s.end(), '-', '_');
  return s + ".csv";
}

void write_outputs(const fs::path& out, const Json& manifest) {
  write_atomic(out / "manifest.json", manifest.dump(2) + "\n");
}

RunResult finish(const fs::path& out, Json manifest, std::size_t skipped) {
  RunResult res;
  res.skipped = skipped;
  for (const auto& pt : manifest["points"]) {
    if (pt["status"] == "ok") ++res.ok;
    else ++res.failed;
  }
  const std::string recipe = manifest["recipe"];
  manifest["summary"] = summarize(recipe, manifest["points"]);
  manifest["status"] = res.failed == 0 ? "complete" : "partial";
  write_outputs(out, manifest);
  write_atomic(out / "summary.json", manifest["summary"].dump(2) + "\n");
  write_atomic(out / collated_name(recipe), collated_csv(recipe, manifest["points"]));
  res.manifest = std::move(manifest);
  return res;
}

}  // namespace

PointOutcome run_point(const std::string& recipe, const GridPoint& pt) {
  const Json& P = pt.params;
  if (recipe == "lambda-scan") return lambda_scan_point(P);
  if (recipe == "hermite-audit") return hermite_audit_point(P);
  if (recipe == "psgd-wishart" || recipe == "psgd-cumulant-scaling" || recipe == "mcm-simplicity") {
    return projected_point(recipe, P, pt);
  }
  if (recipe == "sgd-contraction") return contraction_point(P, pt);
  if (recipe == "clone-eval" || recipe == "overparam") return tied_point(recipe, P, pt);
  throw std::invalid_argument("run_point: unknown recipe '" + recipe + "'");
}

std::string collated_csv(const std::string& recipe, const Json& points) {
  (void)recipe;
  std::vector<std::string> coord_keys;
  std::set<std::string> summary_keys;
  for (const auto& pt : points) {
    if (coord_keys.empty()) {
      for (const auto& [k, v] : pt["coords"].items()) coord_keys.push_back(k);
    }
    if (pt.contains("summary") && pt["summary"].is_object()) {
      for (const auto& [k, v] : pt["summary"].items()) summary_keys.insert(k);
    }
  }
  std::ostringstream os;
  os << "id";
  for (const auto& k : coord_keys) os << "," << k;
  os << ",replicate,status";
  for (const auto& k : summary_keys) os << "," << k;
  os << "\n";
  for (const auto& pt : points) {
    os << pt["id"].get<std::string>();
    for (const auto& k : coord_keys) os << "," << csv_cell(pt["coords"][k]);
    os << "," << pt["replicate"].get<std::size_t>() << "," << pt["status"].get<std::string>();
    for (const auto& k : summary_keys) {
      os << ",";
      if (pt.contains("summary") && pt["summary"].is_object() && pt["summary"].contains(k)) os << csv_cell(pt["summary"][k]);
    }
    os << "\n";
  }
  return os.str();
}

Json summarize(const std::string& recipe, const Json& points) {
  // Groups ok points by the value of one coordinate, in first-seen order.
  auto group_by = [&](const std::string& key) {
    std::vector<std::pair<Json, std::vector<const Json*>>> groups;
    for (const auto& pt : points) {
      const Json k = pt["coords"].contains(key) ? pt["coords"][key] : Json(nullptr);
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == k; });
      if (it == groups.end()) {
        groups.push_back({k, {}});
        it = groups.end() - 1;
      }
      it->second.push_back(&pt);
    }
    return groups;
  };
  auto is_ok = [](const Json* pt) { return (*pt)["status"] == "ok"; };
  auto opt_num = [](const Json& v) -> std::optional<double> {
    return v.is_number() ? std::optional<double>(v.get<double>()) : std::nullopt;
  };

  Json s = Json::object();
  std::size_t failed = 0;
  for (const auto& pt : points) failed += pt["status"] != "ok";
  s["points"] = points.size();
  s["failed"] = failed;

  if (recipe == "lambda-scan") {
    Json per = Json::array();
    for (const auto& [act, pts] : group_by("activation")) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const Json* pt : pts) {
        if (!is_ok(pt)) continue;
        const double l = (*pt)["summary"]["lambda"];
        lo = std::min(lo, l);
        hi = std::max(hi, l);
      }
      const std::string sign = hi < 0.0 ? "negative" : lo > 0.0 ? "positive" : "mixed";
      per.push_back({{"activation", act}, {"lambda_min", lo}, {"lambda_max", hi}, {"sign", sign}});
    }
    s["by_activation"] = per;
  } else if (recipe == "hermite-audit") {
    Json per = Json::array();
    std::set<std::string> matches;
    for (const auto& pt : points) {
      if (pt["status"] != "ok") continue;
      Json e = pt["summary"];
      e["t"] = pt["coords"].value("t", pt["summary"].value("t", 0.0));
      matches.insert(e["c4_matches"].get<std::string>());
      per.push_back(e);
    }
    s["by_t"] = per;
    s["c4_matches"] = matches.size() == 1 ? Json(*matches.begin()) : Json("inconsistent");
  } else if (recipe == "psgd-wishart") {
    Json per = Json::array();
    for (const auto& [d, pts] : group_by("d")) {
      std::size_t n = 0, succ = 0;
      for (const Json* pt : pts) {
        ++n;
        if (is_ok(pt) && (*pt)["summary"].value("success", false)) ++succ;
      }
      per.push_back({{"d", d}, {"runs", n}, {"successes", succ}});
    }
    s["by_d"] = per;
  } else if (recipe == "psgd-cumulant-scaling") {
    Json per = Json::array();
    std::vector<std::pair<double, std::optional<double>>> fit_in;
    for (const auto& [d, pts] : group_by("d")) {
      std::vector<std::optional<double>> times;
      std::size_t unc = 0;
      for (const Json* pt : pts) {
        std::optional<double> t;
        if (is_ok(pt)) t = opt_num((*pt)["summary"]["recovery_time_v"]);
        unc += t.has_value();
        times.push_back(t);
      }
      const auto med = censored_median(times);
      per.push_back({{"d", d},
                     {"runs", pts.size()},
                     {"uncensored", unc},
                     {"uncensored_fraction", pts.empty() ? 0.0 : static_cast<double>(unc) / pts.size()},
                     {"median_recovery_time", med ? Json(*med) : Json(nullptr)}});
      if (med && d.is_number()) fit_in.emplace_back(d.get<double>(), med);
    }
    s["by_d"] = per;
    try {
      const auto fit = scaling_fit(fit_in);
      s["fit"] = {{"exponent", fit.exponent}, {"intercept", fit.intercept}, {"residual", fit.residual},
                  {"dimensions", fit.points.size()}};
    } catch (const std::exception& e) {
      s["fit"] = {{"error", e.what()}};
    }
  } else if (recipe == "mcm-simplicity") {
    Json per = Json::array();
    for (const auto& [corr, pts] : group_by("latent_corr")) {
      std::size_t n = 0, u_rec = 0, v_small = 0, v_rec = 0, both_ordered = 0;
      std::vector<std::optional<double>> tu, tv;
      for (const Json* pt : pts) {
        ++n;
        if (!is_ok(pt)) {
          tu.emplace_back();
          tv.emplace_back();
          continue;
        }
        const Json& sm = (*pt)["summary"];
        const auto a = opt_num(sm["recovery_time_u"]);
        const auto b = opt_num(sm["recovery_time_v"]);
        tu.push_back(a);
        tv.push_back(b);
        u_rec += a.has_value();
        v_rec += b.has_value();
        v_small += sm["max_abs_alpha_v"].get<double>() < 0.2;
        both_ordered += a && b && *a <= *b;
      }
      const auto mu = censored_median(tu), mv = censored_median(tv);
      per.push_back({{"latent_corr", corr},
                     {"runs", n},
                     {"u_recovered", u_rec},
                     {"v_recovered", v_rec},
                     {"v_below_0.2", v_small},
                     {"both_recovered_u_first", both_ordered},
                     {"median_recovery_time_u", mu ? Json(*mu) : Json(nullptr)},
                     {"median_recovery_time_v", mv ? Json(*mv) : Json(nullptr)}});
    }
    s["by_latent_corr"] = per;
  } else if (recipe == "sgd-contraction") {
    std::size_t pass = 0, small = 0;
    for (const auto& pt : points) {
      if (pt["status"] != "ok") continue;
      pass += pt["summary"]["contraction_pass"].get<bool>();
      small += pt["summary"]["final_wnorm"].get<double>() < 0.1;
    }
    s["contraction_pass"] = pass;
    s["final_wnorm_below_0.1"] = small;
  } else if (recipe == "clone-eval" || recipe == "overparam") {
    Json per = Json::array();
    for (const auto& [m, pts] : group_by("width")) {
      std::size_t n = 0, v_rec = 0, below = 0;
      double max_v = 0.0;
      for (const Json* pt : pts) {
        ++n;
        if (!is_ok(pt)) continue;
        const Json& sm = (*pt)["summary"];
        const double mv = sm["max_abs_alpha_v"].get<double>();
        max_v = std::max(max_v, mv);
        v_rec += mv >= 0.5;
        below += mv < 0.2;
      }
      Json e = {{"width", m}, {"runs", n}, {"v_overlap_reached_0.5", v_rec},
                {"v_overlap_stayed_below_0.2", below}, {"max_v_overlap", max_v}};
      if (recipe == "clone-eval") {
        double before = 0.0;
        std::optional<double> after;
        for (const Json* pt : pts) {
          if (!is_ok(pt)) continue;
          const Json& sm = (*pt)["summary"];
          before = std::max(before, sm.value("gap_meancov_max_before_v", 0.0));
          if (sm.contains("gap_meancov_min_after_v") && sm["gap_meancov_min_after_v"].is_number()) {
            const double a = sm["gap_meancov_min_after_v"];
            after = after ? std::min(*after, a) : a;
          }
        }
        e["gap_meancov_max_before_v"] = before;
        e["gap_meancov_min_after_v"] = after ? Json(*after) : Json(nullptr);
      }
      per.push_back(e);
    }
    s["by_width"] = per;
  }
  return s;
}

RunResult run_recipe(const ExperimentRecipe& r, const RunOptions& opt) {
  if (r.out.empty()) throw RunSetupError("no output directory given");
  const fs::path out(r.out);
  std::error_code ec;
  fs::create_directories(out / "points", ec);
  if (ec) throw RunSetupError("cannot create output directory " + out.string() + ": " + ec.message());

  const auto pts = r.points();
  const std::string hash = r.hash();
  Json previous;
  const fs::path mpath = out / "manifest.json";
  if (fs::exists(mpath)) {
    try {
      previous = Json::parse(read_file(mpath));
    } catch (const std::exception& e) {
      if (opt.resume) throw RunSetupError("cannot parse existing manifest: " + std::string(e.what()));
    }
  }
  const bool same = previous.is_object() && previous.value("config_hash", std::string()) == hash;
  if (opt.resume && !previous.is_object()) throw RunSetupError("--resume given but no manifest in " + out.string());
  if (opt.resume && !same) throw RunSetupError("--resume given but the manifest config hash differs");

  Json manifest;
  manifest["tool"] = "cumulab";
  manifest["version"] = kToolVersion;
  manifest["recipe"] = r.name;
  manifest["config"] = r.to_json();
  manifest["config_hash"] = hash;
  manifest["points"] = Json::array();

  std::vector<std::size_t> todo;
  std::size_t skipped = 0;
  for (const auto& pt : pts) {
    Json e = {{"id", pt.id}, {"index", pt.index}, {"coords", pt.coords}, {"replicate", pt.replicate},
              {"seed", pt.seed}, {"status", "pending"}, {"error", nullptr}, {"summary", nullptr},
              {"files", Json::array()}};
    bool done = false;
    if (same) {
      for (const auto& old : previous["points"]) {
        if (old.value("id", std::string()) != pt.id || old.value("status", std::string()) != "ok") continue;
        bool files_ok = true;
        for (const auto& f : old["files"]) files_ok = files_ok && fs::exists(out / f.get<std::string>());
        if (files_ok) {
          e = old;
          done = true;
        }
        break;
      }
    }
    if (done) ++skipped;
    else todo.push_back(manifest["points"].size());
    manifest["points"].push_back(std::move(e));
  }
  write_outputs(out, manifest);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const std::size_t slot = todo[k];
      const GridPoint& pt = pts[slot];
      Json status = "ok", error = nullptr, summary = nullptr, files = Json::array();
      try {
        PointOutcome o = run_point(r.name, pt);
        if (!o.csv.empty()) {
          const std::string rel = "points/" + pt.id + ".csv";
          write_atomic(out / rel, o.csv);
          files.push_back(rel);
        }
        summary = std::move(o.summary);
      } catch (const std::exception& e) {
        status = "failed";
        error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      auto& e = manifest["points"][slot];
      e["status"] = status;
      e["error"] = error;
      e["summary"] = summary;
      e["files"] = files;
      try {
        write_outputs(out, manifest);
      } catch (const std::exception&) {
        // The final write below reports persistent I/O failures.
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(opt.workers, todo.size()));
  std::vector<std::thread> threads;
  for (std::size_t i = 1; i < n; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  return finish(out, std::move(manifest), skipped);
}

RunResult recollate(const fs::path& out_dir) {
  const fs::path mpath = out_dir / "manifest.json";
  if (!fs::exists(mpath)) throw RunSetupError("no manifest in " + out_dir.string());
  Json manifest;
  try {
    manifest = Json::parse(read_file(mpath));
  } catch (const std::exception& e) {
    throw RunSetupError("cannot parse manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("recipe") || !manifest.contains("points")) throw RunSetupError("manifest lacks recipe or points");
  return finish(out_dir, std::move(manifest), 0);
}

}  // namespace cumulab
