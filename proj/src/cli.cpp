#include "rrst/cli.hpp"

#include "rrst/bench.hpp"
#include "rrst/evaluation.hpp"
#include "rrst/fit.hpp"
#include "rrst/io.hpp"
#include "rrst/predict.hpp"
#include "rrst/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace rrst {

namespace {

/// Reads a JSON document as CLI11 config items. Nested objects become
/// dotted option names, so {"optimizer": {"seed": 3}} sets --optimizer.seed.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, "", items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const nlohmann::json& j, const std::string& prefix,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string name = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (it->is_object()) {
        flatten(*it, name, items);
        continue;
      }
      CLI::ConfigItem item;
      item.name = name;
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(*it));
      }
      items.push_back(std::move(item));
    }
  }
};

struct Options {
  std::string sites, obs, out = ".", model;
  std::string basis = "tprs";
  std::string rank = "10";
  std::string range_mode = "est";
  std::string beta_nugget = "on";
  std::string knots = "sites";
  double grid_cell_km = 2.5;
  int m = 2;
  double smooth_df = 0.0;
  std::vector<std::string> covariates;
  int max_iterations = 300;
  int multistart = 1;
  double rel_tol = 1e-8;
  double grad_tol = 1e-5;
  std::uint64_t seed = 1;
  int threads = 1;
  bool verbose = false;

  // predict
  std::string target_sites;
  std::vector<std::string> dates;
  bool no_variance = false;
  bool lta_all_periods = false;

  // cv
  std::string cv_class;
  int folds = 10;
  bool refit_trends = false;
  bool cluster_folds = false;
  double cluster_km = 1.0;
  std::string scale = "native";
  bool perfect_predictor = false;

  bool dump_basis = false;

  // simulate
  int n_fixed = 20, n_snapshot = 20, n_home = 40, periods = 52;
  std::string sim_basis = "full";
  std::string start_date = "2000-01-03";

  // bench
  std::vector<int> sizes{50, 100, 200, 400};
  int reps = 5;
  int bench_periods = 100;
};

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InputError("bad " + what + " '" + tok + "'");
    }
  }
  if (out.empty()) throw InputError("empty " + what);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

bool on_off(const std::string& s, const std::string& what) {
  if (s == "on" || s == "true") return true;
  if (s == "off" || s == "false") return false;
  throw InputError(what + " must be on or off, got '" + s + "'");
}

SiteKind cv_class(const std::string& s) {
  if (s == "fixed") return SiteKind::AQS_FIXED;
  if (s == "snapshot") return SiteKind::SNAPSHOT;
  if (s == "home") return SiteKind::HOME;
  throw InputError("--cv-class must be fixed, snapshot or home");
}

/// Model spec for one (basis, rank, range mode); rank 0 selects no basis.
ModelSpec make_spec(const Options& o, const std::string& basis, int rank, const std::string& range) {
  ModelSpec spec;
  spec.m = o.m;
  spec.basis.kind = rank == 0 ? BasisKind::NONE : basis_kind_from_string(basis);
  const bool rankless = spec.basis.kind == BasisKind::FULL || spec.basis.kind == BasisKind::NONE;
  spec.basis.K = rankless ? 0 : rank;
  spec.basis.range_mode = RangeMode::parse(range);
  if (o.knots == "grid") {
    spec.basis.placement = KnotPlacement::GRID;
  } else if (o.knots != "sites") {
    throw InputError("--knots must be sites or grid");
  }
  spec.basis.grid_cell_km = o.grid_cell_km;
  spec.include_beta_nugget = on_off(o.beta_nugget, "--beta-nugget");
  spec.smooth_df = o.smooth_df;
  if (!o.covariates.empty()) spec.covariates.assign(static_cast<std::size_t>(o.m), o.covariates);
  spec.optimizer.max_iterations = o.max_iterations;
  spec.optimizer.multistart = o.multistart;
  spec.optimizer.rel_tol = o.rel_tol;
  spec.optimizer.grad_tol = o.grad_tol;
  spec.optimizer.seed = o.seed;
  spec.validate();
  return spec;
}

/// Files are rendered fully in memory and written only after the command
/// succeeded, so a failure leaves no partial outputs behind.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void commit() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory '" + dir_.string() + "'");
    std::vector<fs::path> written;
    try {
      for (const auto& [name, content] : files_) {
        const fs::path tmp = dir_ / (name + ".tmp");
        write_text(tmp, content);
        written.push_back(tmp);
      }
      for (const auto& [name, content] : files_) fs::rename(dir_ / (name + ".tmp"), dir_ / name);
    } catch (...) {
      for (const auto& p : written) fs::remove(p, ec);
      throw;
    }
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw InputError(flag + " is required");
}

int cmd_fit(const Options& o, std::ostream& out) {
  require(o.sites, "--sites");
  require(o.obs, "--obs");
  const SiteTable sites = read_sites_csv(o.sites);
  const ObservationSet obs = read_obs_csv(o.obs);
  const std::vector<int> ranks = parse_int_list(o.rank, "rank");
  if (ranks.size() != 1) throw InputError("fit takes a single --rank");
  const ModelSpec spec = make_spec(o, o.basis, ranks[0], o.range_mode);
  const FittedModel fm = fit(spec, sites, obs);
  Outputs files(o.out);
  files.add("model.json", model_to_json(fm));
  const std::string report = fit_report(fm, sites, obs);
  files.add("fit_report.txt", report);
  if (o.dump_basis) files.add("basis.csv", basis_csv(fm));
  files.commit();
  out << report;
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out) {
  require(o.sites, "--sites");
  require(o.obs, "--obs");
  const std::string model_path = o.model.empty() ? (fs::path(o.out) / "model.json").string() : o.model;
  const FittedModel fm = model_from_json(read_text(model_path));
  const SiteTable sites = read_sites_csv(o.sites);
  const ObservationSet obs = read_obs_csv(o.obs);
  const Predictor predictor = make_predictor(fm, sites, obs);
  const int T = predictor.layout().num_periods();

  PredictionRequest req;
  req.want_variance = !o.no_variance;
  req.lta_all_periods = o.lta_all_periods;
  if (o.target_sites.empty()) {
    // Default targets: the observed site-periods of the training data.
    std::map<std::string, std::size_t> slot;
    for (const auto& s : sites) {
      slot[s.id] = req.sites.size();
      req.sites.push_back(s);
      req.periods.emplace_back();
    }
    for (const auto& r : obs) req.periods[slot.at(r.site_id)].push_back(r.period);
    std::vector<Site> keep_sites;
    std::vector<std::vector<int>> keep_periods;
    for (std::size_t i = 0; i < req.sites.size(); ++i) {
      if (req.periods[i].empty()) continue;
      std::sort(req.periods[i].begin(), req.periods[i].end());
      keep_sites.push_back(req.sites[i]);
      keep_periods.push_back(req.periods[i]);
    }
    req.sites = std::move(keep_sites);
    req.periods = std::move(keep_periods);
  } else {
    const SiteTable targets = read_sites_csv(o.target_sites);
    std::vector<int> periods;
    if (o.dates.empty()) {
      for (int t = 0; t < T; ++t) periods.push_back(t);
    } else {
      for (const auto& d : o.dates) {
        const int day = parse_date(d);
        const int off = day - obs.anchor_day();
        if (off % 14 != 0 || off < 0 || off / 14 >= T) {
          throw InputError("prediction date " + d + " is not a period of the temporal basis grid (" +
                           format_date(obs.anchor_day()) + " to " +
                           format_date(obs.anchor_day() + 14 * (T - 1)) + ")");
        }
        periods.push_back(off / 14);
      }
    }
    for (const auto& s : targets) {
      req.sites.push_back(s);
      req.periods.push_back(periods);
    }
  }
  const PredictionResult res = predictor.predict(req);
  Outputs files(o.out);
  files.add("predictions.csv", predictions_csv(res, obs.anchor_day()));
  files.add("lta.csv", lta_csv(res));
  files.commit();
  out << "predicted " << res.points.size() << " site-periods at " << req.sites.size() << " sites\n";
  return 0;
}

int cmd_cv(const Options& o, std::ostream& out) {
  require(o.sites, "--sites");
  require(o.obs, "--obs");
  require(o.cv_class, "--cv-class");
  const SiteTable sites = read_sites_csv(o.sites);
  const ObservationSet obs = read_obs_csv(o.obs);
  const SiteKind cls = cv_class(o.cv_class);
  const CVPlan plan = make_folds(sites, cls, o.folds, o.seed, o.cluster_folds ? o.cluster_km : 0.0);
  CVOptions cvo;
  cvo.refit_trends = o.refit_trends;
  cvo.perfect_predictor = o.perfect_predictor;
  if (o.scale == "log") {
    cvo.scale = ScoreScale::LOG;
  } else if (o.scale != "native") {
    throw InputError("--scale must be native or log");
  }
  std::optional<TemporalBasis> trends;
  if (!o.refit_trends && !o.perfect_predictor) {
    trends = estimate_temporal_basis(obs, o.m, o.smooth_df);
    cvo.trends = &*trends;
  }

  std::vector<CVReport> reports;
  for (const auto& basis : split(o.basis)) {
    for (const auto& range : split(o.range_mode)) {
      // A model without a spatial basis has no rank to vary.
      const std::vector<int> ranks = basis == "none" ? std::vector<int>{0} : parse_int_list(o.rank, "rank");
      for (int rank : ranks) {
        const ModelSpec spec = make_spec(o, basis, rank, range);
        CVReport r = cross_validate(spec, sites, obs, plan, cvo);
        // Rank 0 is reported in the row of the basis it was requested with.
        r.model_label = model_row_label(make_spec(o, basis, rank == 0 ? 10 : rank, range));
        r.rank = rank;
        out << r.model_label << " K=" << rank << ": two-week R2 " << format_double(r.two_week.r2)
            << ", LTA R2 " << (r.lta ? format_double(r.lta->r2) : std::string("n/a"))
            << (r.any_fold_failed ? " (SOME FOLDS FAILED)" : "") << '\n';
        reports.push_back(std::move(r));
      }
    }
  }
  Outputs files(o.out);
  files.add("cv_report.json", cv_report_json(reports));
  files.add("cv_table.csv", cv_table_csv(reports));
  files.commit();
  return 0;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  SimLayout sim = make_archetype_layout(o.n_fixed, o.n_snapshot, o.n_home, o.periods, o.seed, o.m);
  sim.anchor_day = parse_date(o.start_date);
  const std::vector<int> ranks = parse_int_list(o.rank, "rank");
  SpatialBasisSpec truth;
  truth.kind = basis_kind_from_string(o.sim_basis);
  truth.K = truth.kind == BasisKind::FULL || truth.kind == BasisKind::NONE ? 0 : ranks[0];
  if (truth.kind == BasisKind::NONE) {
    for (auto& b : sim.truth.theta_B) b.partial_sill = 0.0;
  }
  const TemporalBasis trends = seasonal_basis(o.periods, o.m, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  Outputs files(o.out);
  files.add("sites.csv", sites_csv(sim.sites));
  files.add("obs.csv", obs_csv(obs));
  files.add("truth.json", truth_json(sim, truth, trends));
  files.commit();
  out << "simulated " << obs.size() << " observations at " << sim.sites.size() << " sites\n";
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  BenchOptions bo;
  bo.sizes = o.sizes;
  bo.repetitions = o.reps;
  bo.rank = parse_int_list(o.rank, "rank")[0];
  bo.num_periods = o.bench_periods;
  bo.m = o.m;
  bo.seed = o.seed;
  bo.bases.clear();
  for (const auto& b : split(o.basis)) bo.bases.push_back(basis_kind_from_string(b));
  const auto cells = run_bench(bo);
  const auto slopes = bench_slopes(cells);
  Outputs files(o.out);
  files.add("bench.csv", bench_csv(cells));
  files.add("bench_slopes.csv", bench_slopes_csv(slopes));
  files.commit();
  out << bench_slopes_csv(slopes);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reduced-rank spatio-temporal exposure models", "rrst"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON configuration; keys are option names (nested objects join with '.')");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  Options o;
  app.add_option("--sites", o.sites, "Sites CSV (site_id,x_km,y_km,kind,covariates...)");
  app.add_option("--obs", o.obs, "Observations CSV (site_id,date,log_value)");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--model", o.model, "Fitted model JSON (predict; default OUT/model.json)");
  app.add_option("--basis", o.basis, "none, lrk, tprs or full (comma list for cv and bench)");
  app.add_option("--rank", o.rank, "Basis rank K (comma list for cv)");
  app.add_option("--range-mode", o.range_mode, "est, fixed:KM, fixed:max, fixed:max/N (comma list for cv)");
  app.add_option("--beta-nugget", o.beta_nugget, "on or off");
  app.add_option("--knots", o.knots, "sites or grid");
  app.add_option("--grid-cell-km", o.grid_cell_km, "Grid spacing for knot candidates");
  app.add_option("--m", o.m, "Number of temporal basis functions");
  app.add_option("--smooth-df", o.smooth_df, "Trend smoothing degrees of freedom (0 = default)");
  app.add_option("--covariates", o.covariates, "Covariates entering every X_j (default all)");
  app.add_option("--optimizer.max-iterations", o.max_iterations, "Optimizer iteration limit");
  app.add_option("--optimizer.multistart", o.multistart, "Number of optimizer starts");
  app.add_option("--optimizer.rel-tol", o.rel_tol, "Relative log-likelihood tolerance");
  app.add_option("--optimizer.grad-tol", o.grad_tol, "Projected gradient tolerance");
  app.add_option("--seed", o.seed, "Seed for knots, folds, multistarts and simulation");
  app.add_option("--threads", o.threads, "Worker cap (computations run single-threaded)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", o.verbose, "Progress messages on stderr");
  app.add_option("--target-sites", o.target_sites, "Prediction sites CSV (predict)");
  app.add_option("--dates", o.dates, "Prediction period start dates (predict; default all)")
      ->delimiter(',');
  app.add_flag("--no-variance", o.no_variance, "Skip prediction variances");
  app.add_flag("--lta-all-periods", o.lta_all_periods, "Average predictions over every grid period");
  app.add_option("--cv-class", o.cv_class, "fixed, snapshot or home");
  app.add_option("--folds", o.folds, "Number of CV folds");
  app.add_flag("--refit-trends", o.refit_trends, "Re-estimate temporal trends within each fold");
  app.add_flag("--cluster-folds", o.cluster_folds, "Keep nearby sites in the same fold");
  app.add_option("--cluster-km", o.cluster_km, "Single-linkage distance for --cluster-folds");
  app.add_option("--scale", o.scale, "Two-week scoring scale: native or log");
  app.add_flag("--perfect-predictor", o.perfect_predictor, "Score the held-out data against itself");
  app.add_flag("--dump-basis", o.dump_basis, "Write the spatial basis at the training sites");
  app.add_option("--sim.n-fixed", o.n_fixed, "Simulated fixed sites");
  app.add_option("--sim.n-snapshot", o.n_snapshot, "Simulated snapshot sites");
  app.add_option("--sim.n-home", o.n_home, "Simulated home sites");
  app.add_option("--sim.periods", o.periods, "Simulated two-week periods");
  app.add_option("--sim.basis", o.sim_basis, "Beta-field truth: full, lrk, tprs or none");
  app.add_option("--sim.start-date", o.start_date, "First period start date");
  app.add_option("--bench.sizes", o.sizes, "Site counts")->delimiter(',');
  app.add_option("--bench.reps", o.reps, "Repetitions per cell");
  app.add_option("--bench.periods", o.bench_periods, "Periods in bench layouts");

  std::string command;
  for (const char* name : {"fit", "predict", "cv", "simulate", "bench"}) {
    app.add_subcommand(name)->fallthrough()->callback([&command, name] { command = name; });
  }
  app.get_subcommand("fit")->description("Estimate a model and write model.json and fit_report.txt");
  app.get_subcommand("predict")->description("Predict with a fitted model");
  app.get_subcommand("cv")->description("Cross-validate by monitor class");
  app.get_subcommand("simulate")->description("Simulate an archetype dataset");
  app.get_subcommand("bench")->description("Time log-likelihood evaluations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  if (command.empty()) {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
  }

  if (command == "bench") {
    if (app.count("--basis") == 0) o.basis = "lrk,tprs";
    if (app.count("--rank") == 0) o.rank = "25";
  }

  try {
    if (o.verbose) err << "rrst " << command << '\n';
    if (command == "fit") return cmd_fit(o, out);
    if (command == "predict") return cmd_predict(o, out);
    if (command == "cv") return cmd_cv(o, out);
    if (command == "simulate") return cmd_simulate(o, out);
    if (command == "bench") return cmd_bench(o, out);
    err << "error: unknown command\n";
    return 2;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const OptimizationError& e) {
    err << "error: optimizer failed: " << e.what() << '\n';
    for (const auto& t : e.trace()) {
      err << "  iteration " << t.iteration << " objective " << format_double(t.value)
          << " projected gradient " << format_double(t.projected_grad_norm) << '\n';
    }
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace rrst
