#include "rrst/io.hpp"

#include "rrst/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace rrst {

using nlohmann::ordered_json;

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw InputError(where + ": cannot parse number '" + s + "'");
  }
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ordered_json matrix_json(const MatrixXd& a) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) rows.push_back(to_vec(a.row(r).transpose()));
  return rows;
}

MatrixXd matrix_from_json(const ordered_json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  MatrixXd a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = j[r][c].get<double>();
  }
  return a;
}

VectorXd vector_from_json(const ordered_json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string placement_name(KnotPlacement p) { return p == KnotPlacement::GRID ? "grid" : "sites"; }

}  // namespace

int parse_date(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &mo, &d, &tail) != 3) {
    throw InputError("bad date '" + s + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw InputError("bad date '" + s + "'");
  return static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(int day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

SiteTable read_sites_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "site_id" || header[1] != "x_km" || header[2] != "y_km" ||
      header[3] != "kind") {
    throw InputError("'" + path.string() + "': header must start with site_id,x_km,y_km,kind");
  }
  SiteTable table(std::vector<std::string>(header.begin() + 4, header.end()));
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != header.size()) throw InputError(where + ": expected " + std::to_string(header.size()) + " fields");
    Site s;
    s.id = f[0];
    s.coord = {parse_number(f[1], where), parse_number(f[2], where)};
    s.kind = site_kind_from_string(f[3]);
    s.covariates.resize(static_cast<Eigen::Index>(f.size() - 4));
    for (std::size_t c = 4; c < f.size(); ++c) s.covariates[static_cast<Eigen::Index>(c - 4)] = parse_number(f[c], where);
    table.add(std::move(s));
  }
  return table;
}

std::string sites_csv(const SiteTable& sites) {
  std::ostringstream os;
  os << "site_id,x_km,y_km,kind";
  for (const auto& n : sites.covariate_names()) os << ',' << n;
  os << '\n';
  for (const auto& s : sites) {
    os << s.id << ',' << format_double(s.coord.x) << ',' << format_double(s.coord.y) << ','
       << to_string(s.kind);
    for (Eigen::Index c = 0; c < s.covariates.size(); ++c) os << ',' << format_double(s.covariates[c]);
    os << '\n';
  }
  return os.str();
}

void write_sites_csv(const std::filesystem::path& path, const SiteTable& sites) {
  write_text(path, sites_csv(sites));
}

ObservationSet read_obs_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  if (header.size() != 3 || header[0] != "site_id" || header[1] != "date" || header[2] != "log_value") {
    throw InputError("'" + path.string() + "': header must be site_id,date,log_value");
  }
  struct Raw {
    std::string id;
    int day;
    double value;
    std::string where;
  };
  std::vector<Raw> raw;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) throw InputError(where + ": expected 3 fields");
    raw.push_back({f[0], parse_date(f[1]), parse_number(f[2], where), where});
  }
  if (raw.empty()) throw InputError("'" + path.string() + "' has no observations");
  int anchor = raw[0].day;
  for (const auto& r : raw) anchor = std::min(anchor, r.day);
  ObservationSet obs;
  obs.set_anchor_day(anchor);
  for (const auto& r : raw) {
    if ((r.day - anchor) % 14 != 0) {
      throw InputError(r.where + ": date " + format_date(r.day) + " is not a period start (anchor " +
                       format_date(anchor) + ")");
    }
    obs.add({r.id, (r.day - anchor) / 14, r.value});
  }
  return obs;
}

std::string obs_csv(const ObservationSet& obs) {
  std::ostringstream os;
  os << "site_id,date,log_value\n";
  for (const auto& r : obs) {
    os << r.site_id << ',' << format_date(obs.anchor_day() + 14 * r.period) << ','
       << format_double(r.value) << '\n';
  }
  return os.str();
}

void write_obs_csv(const std::filesystem::path& path, const ObservationSet& obs) {
  write_text(path, obs_csv(obs));
}

std::string model_to_json(const FittedModel& fm) {
  ordered_json j;
  j["schema_version"] = FittedModel::kSchemaVersion;
  const ModelSpec& sp = fm.spec;
  j["spec"] = {{"m", sp.m},
               {"basis", to_string(sp.basis.kind)},
               {"rank", sp.basis.K},
               {"range_mode", sp.basis.range_mode.label()},
               {"knots", placement_name(sp.basis.placement)},
               {"grid_cell_km", sp.basis.grid_cell_km},
               {"beta_nugget", sp.include_beta_nugget},
               {"covariates", sp.covariates},
               {"smooth_df", sp.smooth_df},
               {"optimizer",
                {{"max_iterations", sp.optimizer.max_iterations},
                 {"rel_tol", sp.optimizer.rel_tol},
                 {"grad_tol", sp.optimizer.grad_tol},
                 {"multistart", sp.optimizer.multistart},
                 {"seed", sp.optimizer.seed}}}};
  j["trends"] = {{"anchor_day", fm.trends.anchor_day}, {"values", matrix_json(fm.trends.values)}};
  ordered_json sites = ordered_json::array();
  for (std::size_t i = 0; i < fm.site_ids.size(); ++i) {
    sites.push_back({{"id", fm.site_ids[i]}, {"x", fm.site_coords[i].x}, {"y", fm.site_coords[i].y}});
  }
  j["training_sites"] = sites;
  ordered_json knots = ordered_json::array();
  for (const auto& k : fm.knots.knots) knots.push_back({k.x, k.y});
  j["knots"] = knots;
  j["max_dist_km"] = fm.max_dist;
  j["fixed_range_km"] = fm.fixed_range;
  j["tprs_standardization"] = {{"center", {fm.tprs_center.x, fm.tprs_center.y}}, {"scale", fm.tprs_scale}};

  ordered_json tb = ordered_json::array();
  for (const auto& b : fm.xi.theta_B) tb.push_back({{"range", b.range}, {"partial_sill", b.partial_sill}});
  j["params"] = {{"theta_B", tb},
                 {"theta_P", fm.xi.theta_P ? ordered_json(*fm.xi.theta_P) : ordered_json(nullptr)},
                 {"theta_V",
                  {{"range", fm.xi.theta_V.range},
                   {"partial_sill", fm.xi.theta_V.partial_sill},
                   {"nugget", fm.xi.theta_V.nugget}}}};
  j["log_params"] = {{"names", fm.param_names}, {"values", to_vec(fm.log_params)}};
  j["alpha"] = {{"names", fm.alpha_names}, {"values", to_vec(fm.alpha)}, {"cov", matrix_json(fm.alpha_cov)}};
  j["loglik"] = fm.loglik;
  j["initial_loglik"] = fm.initial_loglik;
  j["aic"] = fm.aic;
  j["path"] = to_string(fm.path);
  ordered_json trace = ordered_json::array();
  for (const auto& t : fm.trace) {
    trace.push_back({{"iteration", t.iteration}, {"objective", t.value}, {"projected_gradient", t.projected_grad_norm}});
  }
  j["optimizer"] = {{"message", fm.optimizer_message},
                    {"iterations", fm.iterations},
                    {"best_start", fm.best_start},
                    {"trace", trace}};
  j["fingerprints"] = {{"observations", fingerprint_hex(fm.obs_fingerprint)},
                       {"sites", fingerprint_hex(fm.site_fingerprint)}};
  j["warnings"] = fm.warnings;
  return j.dump(2) + "\n";
}

FittedModel model_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw InputError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != FittedModel::kSchemaVersion) {
      throw InputError("unsupported model schema version " + j.at("schema_version").dump());
    }
    FittedModel fm;
    const auto& sp = j.at("spec");
    fm.spec.m = sp.at("m").get<int>();
    fm.spec.basis.kind = basis_kind_from_string(sp.at("basis").get<std::string>());
    fm.spec.basis.K = sp.at("rank").get<int>();
    fm.spec.basis.range_mode = RangeMode::parse(sp.at("range_mode").get<std::string>());
    fm.spec.basis.placement = sp.at("knots").get<std::string>() == "grid" ? KnotPlacement::GRID : KnotPlacement::SITES;
    fm.spec.basis.grid_cell_km = sp.at("grid_cell_km").get<double>();
    fm.spec.include_beta_nugget = sp.at("beta_nugget").get<bool>();
    fm.spec.covariates = sp.at("covariates").get<std::vector<std::vector<std::string>>>();
    fm.spec.smooth_df = sp.at("smooth_df").get<double>();
    const auto& op = sp.at("optimizer");
    fm.spec.optimizer.max_iterations = op.at("max_iterations").get<int>();
    fm.spec.optimizer.rel_tol = op.at("rel_tol").get<double>();
    fm.spec.optimizer.grad_tol = op.at("grad_tol").get<double>();
    fm.spec.optimizer.multistart = op.at("multistart").get<int>();
    fm.spec.optimizer.seed = op.at("seed").get<std::uint64_t>();

    fm.trends.anchor_day = j.at("trends").at("anchor_day").get<int>();
    fm.trends.values = matrix_from_json(j.at("trends").at("values"), fm.spec.m);
    for (const auto& s : j.at("training_sites")) {
      fm.site_ids.push_back(s.at("id").get<std::string>());
      fm.site_coords.push_back({s.at("x").get<double>(), s.at("y").get<double>()});
    }
    for (const auto& k : j.at("knots")) fm.knots.knots.push_back({k[0].get<double>(), k[1].get<double>()});
    fm.knots.source = fm.spec.basis.placement == KnotPlacement::GRID ? KnotSource::GRID : KnotSource::MONITOR_SITES;
    if (fm.spec.basis.kind == BasisKind::LRK) fm.spec.basis.knots = fm.knots;
    fm.max_dist = j.at("max_dist_km").get<double>();
    fm.fixed_range = j.at("fixed_range_km").get<double>();
    const auto& ts = j.at("tprs_standardization");
    fm.tprs_center = {ts.at("center")[0].get<double>(), ts.at("center")[1].get<double>()};
    fm.tprs_scale = ts.at("scale").get<double>();

    const auto& pj = j.at("params");
    for (const auto& b : pj.at("theta_B")) {
      fm.xi.theta_B.push_back({b.at("range").get<double>(), b.at("partial_sill").get<double>(), 0.0});
    }
    if (!pj.at("theta_P").is_null()) fm.xi.theta_P = pj.at("theta_P").get<std::vector<double>>();
    const auto& v = pj.at("theta_V");
    fm.xi.theta_V = {v.at("range").get<double>(), v.at("partial_sill").get<double>(), v.at("nugget").get<double>()};
    fm.param_names = j.at("log_params").at("names").get<std::vector<std::string>>();
    fm.log_params = vector_from_json(j.at("log_params").at("values"));
    fm.alpha_names = j.at("alpha").at("names").get<std::vector<std::string>>();
    fm.alpha = vector_from_json(j.at("alpha").at("values"));
    fm.alpha_cov = matrix_from_json(j.at("alpha").at("cov"), fm.alpha.size());
    fm.loglik = j.at("loglik").get<double>();
    fm.initial_loglik = j.at("initial_loglik").get<double>();
    fm.aic = j.at("aic").get<double>();
    const std::string path = j.at("path").get<std::string>();
    fm.path = path == "dense" ? LikelihoodPath::DENSE
              : path == "no_nugget" ? LikelihoodPath::NO_NUGGET
                                    : LikelihoodPath::NUGGET;
    const auto& oj = j.at("optimizer");
    fm.optimizer_message = oj.at("message").get<std::string>();
    fm.iterations = oj.at("iterations").get<int>();
    fm.best_start = oj.at("best_start").get<int>();
    for (const auto& t : oj.at("trace")) {
      fm.trace.push_back({t.at("iteration").get<int>(), t.at("objective").get<double>(),
                          t.at("projected_gradient").get<double>(), VectorXd()});
    }
    fm.obs_fingerprint = std::stoull(j.at("fingerprints").at("observations").get<std::string>(), nullptr, 16);
    fm.site_fingerprint = std::stoull(j.at("fingerprints").at("sites").get<std::string>(), nullptr, 16);
    fm.warnings = j.at("warnings").get<std::vector<std::string>>();
    return fm;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file is malformed: ") + e.what());
  }
}

std::string predictions_csv(const PredictionResult& result, int anchor_day) {
  std::ostringstream os;
  os << "site_id,period_start_date,pred_log,pred_var\n";
  for (const auto& p : result.points) {
    os << p.site_id << ',' << format_date(anchor_day + 14 * p.period) << ',' << format_double(p.mean)
       << ',' << format_double(p.variance) << '\n';
  }
  return os.str();
}

std::string lta_csv(const PredictionResult& result) {
  std::ostringstream os;
  os << "site_id,lta_native\n";
  for (const auto& l : result.lta) os << l.site_id << ',' << format_double(l.lta_native) << '\n';
  return os.str();
}

namespace {

ordered_json score_json(const Score& s) {
  auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  return {{"rmse", num(s.rmse)}, {"r2", num(s.r2)}, {"count", s.count}};
}

}  // namespace

std::string cv_report_json(const std::vector<CVReport>& reports) {
  ordered_json all = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json j;
    j["class"] = to_string(r.site_class);
    j["folds_k"] = r.k;
    j["seed"] = r.seed;
    j["model"] = r.model_label;
    j["rank"] = r.rank;
    j["scale"] = r.scale == ScoreScale::NATIVE ? "native" : "log";
    j["any_fold_failed"] = r.any_fold_failed;
    j["two_week"] = score_json(r.two_week);
    j["lta"] = r.lta ? score_json(*r.lta) : ordered_json(nullptr);
    ordered_json seasons = ordered_json::object();
    for (const auto& [k, s] : r.by_season) seasons[k] = score_json(s);
    j["by_season"] = seasons;
    j["detrended_two_week"] = r.detrended ? score_json(*r.detrended) : ordered_json(nullptr);
    ordered_json folds = ordered_json::array();
    for (const auto& f : r.folds) {
      folds.push_back({{"fold", f.fold},
                       {"ok", f.ok},
                       {"error", f.error},
                       {"held_out", f.held_out},
                       {"train_fingerprint", f.train_fingerprint},
                       {"leakage_free", f.leakage_free},
                       {"loglik", f.loglik},
                       {"param_names", f.param_names},
                       {"log_params", f.log_params}});
    }
    j["folds"] = folds;
    all.push_back(j);
  }
  return all.dump(2) + "\n";
}

std::string fit_report(const FittedModel& fm, const SiteTable& sites, const ObservationSet& obs) {
  std::ostringstream os;
  os << std::fixed;
  os << "Data summary (log scale)\n";
  std::map<SiteKind, std::vector<double>> by_kind;
  for (const auto& r : obs) {
    const auto idx = sites.find(r.site_id);
    if (idx) by_kind[sites[*idx].kind].push_back(r.value);
  }
  for (const auto& [kind, vals] : by_kind) {
    const SummaryStats s = summarize(vals);
    os << "  " << std::left << std::setw(9) << to_string(kind) << " n=" << s.count << std::setprecision(2)
       << " mean=" << s.mean << " sd=" << s.sd << '\n';
  }
  os << "\nModel: basis=" << to_string(fm.spec.basis.kind) << " K=" << fm.spec.basis.K
     << " range=" << fm.spec.basis.range_mode.label()
     << " beta_nugget=" << (fm.spec.include_beta_nugget ? "on" : "off") << " m=" << fm.spec.m
     << " path=" << to_string(fm.path) << '\n';
  os << std::setprecision(6);
  os << "Log-likelihood: " << fm.loglik << "\n";
  os << "Initial log-likelihood: " << fm.initial_loglik << "\n";
  os << "AIC: " << fm.aic << "\n";
  os << "Optimizer: " << fm.optimizer_message << " after " << fm.iterations << " iterations\n";
  os << "\nCovariance parameters\n";
  os << "  " << std::left << std::setw(16) << "name" << std::right << std::setw(14) << "log value"
     << std::setw(14) << "value" << '\n';
  for (std::size_t i = 0; i < fm.param_names.size(); ++i) {
    const double v = fm.log_params[static_cast<Eigen::Index>(i)];
    os << "  " << std::left << std::setw(16) << fm.param_names[i] << std::right << std::setw(14) << v
       << std::setw(14) << std::exp(v) << '\n';
  }
  os << "\nRegression coefficients\n";
  os << "  " << std::left << std::setw(24) << "name" << std::right << std::setw(14) << "estimate"
     << std::setw(14) << "std.error" << '\n';
  for (std::size_t i = 0; i < fm.alpha_names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double se = fm.alpha_cov.size() ? std::sqrt(std::max(0.0, fm.alpha_cov(k, k))) : 0.0;
    os << "  " << std::left << std::setw(24) << fm.alpha_names[i] << std::right << std::setw(14)
       << fm.alpha[k] << std::setw(14) << se << '\n';
  }
  if (!fm.warnings.empty()) {
    os << "\nWarnings\n";
    for (const auto& w : fm.warnings) os << "  " << w << '\n';
  }
  return os.str();
}

std::string basis_csv(const FittedModel& fm) {
  if (!fm.layout) throw InputError("basis dump needs the training layout");
  const ModelLayout& L = *fm.layout;
  MatrixXd U = L.tprs ? L.tprs->unpenalized_at(L.coords) : MatrixXd(L.n(), 0);
  MatrixXd Z = L.penalized_for(0, fm.xi);
  std::ostringstream os;
  os << "site_id";
  for (Eigen::Index c = 0; c < U.cols(); ++c) os << ",t" << c + 1;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) os << ",z" << c + 1;
  os << '\n';
  for (int s = 0; s < L.n(); ++s) {
    os << L.stacked.site_ids[static_cast<std::size_t>(s)];
    for (Eigen::Index c = 0; c < U.cols(); ++c) os << ',' << format_double(U(s, c));
    for (Eigen::Index c = 0; c < Z.cols(); ++c) os << ',' << format_double(Z(s, c));
    os << '\n';
  }
  return os.str();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace rrst
