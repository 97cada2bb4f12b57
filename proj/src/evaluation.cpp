#include "rrst/evaluation.hpp"

#include "rrst/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace rrst {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> single_linkage(std::span<const Point> pts, double cut) {
  std::vector<int> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      if (distance(pts[a], pts[b]) < cut) {
        const int ra = find(static_cast<int>(a)), rb = find(static_cast<int>(b));
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::vector<int> root(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) root[i] = find(static_cast<int>(i));
  return root;
}

double to_scale(double log_value, ScoreScale scale) {
  return scale == ScoreScale::NATIVE ? std::exp(log_value) : log_value;
}

Score score(std::span<const double> pred, std::span<const double> obs) {
  Score s;
  s.count = obs.size();
  s.rmse = rmse(pred, obs);
  try {
    s.r2 = clamped_r2(pred, obs);
  } catch (const InputError&) {
    s.r2 = kNaN;
  }
  return s;
}

}  // namespace

CVPlan make_folds(const SiteTable& sites, SiteKind site_class, int k, std::uint64_t seed,
                  double cluster_km) {
  if (k < 2) throw InputError("make_folds: need at least 2 folds");
  std::vector<const Site*> members;
  for (const auto& s : sites) {
    if (s.kind == site_class) members.push_back(&s);
  }
  if (static_cast<int>(members.size()) < k) {
    throw InputError("make_folds: class " + to_string(site_class) + " has " +
                     std::to_string(members.size()) + " sites, fewer than " + std::to_string(k) +
                     " folds");
  }
  std::vector<std::vector<std::size_t>> clusters;
  if (cluster_km > 0.0) {
    std::vector<Point> pts;
    for (const Site* s : members) pts.push_back(s->coord);
    const std::vector<int> root = single_linkage(pts, cluster_km);
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < members.size(); ++i) {
      auto [it, fresh] = index.try_emplace(root[i], clusters.size());
      if (fresh) clusters.emplace_back();
      clusters[it->second].push_back(i);
    }
    if (static_cast<int>(clusters.size()) < k) {
      throw InputError("make_folds: only " + std::to_string(clusters.size()) +
                       " site clusters for " + std::to_string(k) + " folds");
    }
  } else {
    for (std::size_t i = 0; i < members.size(); ++i) clusters.push_back({i});
  }

  Rng rng(seed);
  rng.shuffle(clusters);
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  CVPlan plan;
  plan.site_class = site_class;
  plan.k = k;
  plan.seed = seed;
  std::vector<std::size_t> load(static_cast<std::size_t>(k), 0);
  std::vector<int> fold_of_member(members.size(), 0);
  for (const auto& c : clusters) {
    const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    load[f] += c.size();
    for (std::size_t i : c) fold_of_member[i] = static_cast<int>(f) + 1;
  }
  plan.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < members.size(); ++i) {
    plan.fold_of[members[i]->id] = fold_of_member[i];
    plan.folds[static_cast<std::size_t>(fold_of_member[i] - 1)].push_back(members[i]->id);
  }
  return plan;
}

double rmse(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) throw InputError("rmse: length mismatch");
  if (obs.empty()) throw InputError("rmse: no values");
  double ss = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) ss += (pred[i] - obs[i]) * (pred[i] - obs[i]);
  return std::sqrt(ss / static_cast<double>(obs.size()));
}

double population_variance(std::span<const double> v) {
  if (v.empty()) throw InputError("population_variance: no values");
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

double clamped_r2(std::span<const double> pred, std::span<const double> obs) {
  const double var = population_variance(obs);
  if (!(var > 0.0)) throw InputError("R2: observed values have zero variance");
  const double e = rmse(pred, obs);
  return std::max(0.0, 1.0 - e * e / var);
}

double r2_lta(std::span<const double> pred_lta, std::span<const double> obs_lta) {
  if (obs_lta.size() < 2) throw InputError("r2_lta: need at least two sites");
  return clamped_r2(pred_lta, obs_lta);
}

double detrended_r2(std::span<const double> pred, std::span<const double> obs,
                    std::span<const double> reference) {
  if (reference.size() != obs.size()) throw InputError("detrended_r2: reference length mismatch");
  std::vector<double> resid(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (std::isnan(reference[i])) {
      throw InputError("detrended_r2: no fixed-site reference for scored value " + std::to_string(i));
    }
    resid[i] = obs[i] - reference[i];
  }
  const double var = population_variance(resid);
  if (!(var > 0.0)) throw InputError("detrended_r2: detrended values have zero variance");
  const double e = rmse(pred, obs);
  return std::max(0.0, 1.0 - e * e / var);
}

std::vector<double> fixed_site_reference(const SiteTable& sites, const ObservationSet& obs,
                                         ScoreScale scale) {
  const int T = obs.num_periods();
  std::vector<double> sum(static_cast<std::size_t>(T), 0.0);
  std::vector<int> count(static_cast<std::size_t>(T), 0);
  for (const auto& r : obs) {
    const auto idx = sites.find(r.site_id);
    if (!idx || sites[*idx].kind != SiteKind::AQS_FIXED) continue;
    sum[static_cast<std::size_t>(r.period)] += to_scale(r.value, scale);
    ++count[static_cast<std::size_t>(r.period)];
  }
  std::vector<double> ref(static_cast<std::size_t>(T), kNaN);
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (count[t] > 0) ref[t] = sum[t] / count[t];
  }
  return ref;
}

std::string season_of_period(int anchor_day, int period) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{anchor_day + 14 * period}}};
  const unsigned mo = static_cast<unsigned>(ymd.month());
  if (mo == 12 || mo <= 2) return "winter";
  if (mo <= 5) return "spring";
  if (mo <= 8) return "summer";
  return "fall";
}

void score_points(CVReport& report, const SiteTable& sites, const ObservationSet& obs,
                  int anchor_day) {
  const auto& pts = report.points;
  report.lta.reset();
  report.by_season.clear();
  report.detrended.reset();
  if (pts.empty()) return;

  std::vector<double> pred, ob;
  for (const auto& p : pts) {
    pred.push_back(to_scale(p.pred_log, report.scale));
    ob.push_back(to_scale(p.obs_log, report.scale));
  }
  report.two_week = score(pred, ob);

  // Long-term averages on the native scale over each site's observed periods.
  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, int> counts;
  std::vector<std::string> order;
  for (const auto& p : pts) {
    if (!counts.count(p.site_id)) order.push_back(p.site_id);
    auto& s = sums[p.site_id];
    s.first += std::exp(p.pred_log);
    s.second += std::exp(p.obs_log);
    ++counts[p.site_id];
  }
  if (order.size() >= 2) {
    std::vector<double> pl, ol;
    for (const auto& id : order) {
      pl.push_back(sums[id].first / counts[id]);
      ol.push_back(sums[id].second / counts[id]);
    }
    Score s;
    s.count = order.size();
    s.rmse = rmse(pl, ol);
    try {
      s.r2 = r2_lta(pl, ol);
    } catch (const InputError&) {
      s.r2 = kNaN;
    }
    report.lta = s;
  }

  if (report.site_class == SiteKind::SNAPSHOT) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      auto& g = groups[season_of_period(anchor_day, pts[i].period)];
      g.first.push_back(pred[i]);
      g.second.push_back(ob[i]);
    }
    for (const auto& [season, g] : groups) report.by_season[season] = score(g.first, g.second);
  }

  if (report.site_class == SiteKind::HOME) {
    const std::vector<double> ref_by_period = fixed_site_reference(sites, obs, report.scale);
    std::vector<double> ref;
    for (const auto& p : pts) {
      ref.push_back(static_cast<std::size_t>(p.period) < ref_by_period.size()
                        ? ref_by_period[static_cast<std::size_t>(p.period)]
                        : kNaN);
    }
    try {
      Score s = report.two_week;
      s.r2 = detrended_r2(pred, ob, ref);
      report.detrended = s;
    } catch (const InputError&) {
      // Left unset: some scored period has no fixed-site reference.
    }
  }
}

CVReport cross_validate(const ModelSpec& spec, const SiteTable& sites, const ObservationSet& obs,
                        const CVPlan& plan, const CVOptions& options) {
  spec.validate();
  CVReport report;
  report.site_class = plan.site_class;
  report.k = plan.k;
  report.seed = plan.seed;
  report.model_label = model_row_label(spec);
  report.rank = spec.basis.K;
  report.scale = options.scale;

  std::optional<TemporalBasis> shared;
  if (!options.perfect_predictor && !options.refit_trends) {
    shared = options.trends ? *options.trends : estimate_temporal_basis(obs, spec.m, spec.smooth_df);
  }

  for (int f = 1; f <= plan.k; ++f) {
    FoldDiagnostics diag;
    diag.fold = f;
    diag.held_out = plan.folds.at(static_cast<std::size_t>(f - 1));
    const std::set<std::string> held(diag.held_out.begin(), diag.held_out.end());
    const ObservationSet train = obs.filter([&](const Observation& o) { return !held.count(o.site_id); });
    const ObservationSet test = obs.filter([&](const Observation& o) { return held.count(o.site_id) > 0; });
    for (const auto& r : train) {
      if (held.count(r.site_id)) diag.leakage_free = false;
    }
    diag.train_fingerprint = fingerprint_hex(fingerprint(train));

    std::vector<CVPoint> fold_points;
    try {
      if (options.perfect_predictor) {
        for (const auto& r : test) fold_points.push_back({r.site_id, r.period, f, r.value, r.value});
      } else {
        const TemporalBasis tb =
            shared ? *shared : estimate_temporal_basis(train, spec.m, spec.smooth_df);
        const FittedModel fm = fit(spec, sites, train, &tb);
        if (fm.obs_fingerprint != fingerprint(train)) diag.leakage_free = false;
        diag.loglik = fm.loglik;
        diag.param_names = fm.param_names;
        diag.log_params.assign(fm.log_params.data(), fm.log_params.data() + fm.log_params.size());

        PredictionRequest req;
        req.want_variance = false;
        req.want_lta = false;
        std::map<std::string, std::size_t> slot;
        for (const auto& r : test) {
          auto [it, fresh] = slot.try_emplace(r.site_id, req.sites.size());
          if (fresh) {
            req.sites.push_back(sites.at(r.site_id));
            req.periods.emplace_back();
          }
          req.periods[it->second].push_back(r.period);
        }
        const Predictor predictor = make_predictor(fm, sites, train);
        const PredictionResult res = predictor.predict(req);
        std::size_t k = 0;
        for (std::size_t i = 0; i < req.sites.size(); ++i) {
          for (int t : req.periods[i]) {
            fold_points.push_back({req.sites[i].id, t, f, 0.0, res.points[k++].mean});
          }
        }
        std::map<std::pair<std::string, int>, double> observed;
        for (const auto& r : test) observed[{r.site_id, r.period}] = r.value;
        for (auto& p : fold_points) p.obs_log = observed.at({p.site_id, p.period});
      }
      diag.ok = true;
    } catch (const std::exception& e) {
      diag.ok = false;
      diag.error = e.what();
      report.any_fold_failed = true;
      fold_points.clear();
    }
    report.points.insert(report.points.end(), fold_points.begin(), fold_points.end());
    report.folds.push_back(std::move(diag));
  }
  score_points(report, sites, obs, obs.anchor_day());
  return report;
}

std::string model_row_label(const ModelSpec& spec) {
  std::string label = to_string(spec.basis.kind);
  if (spec.basis.range_dependent()) label += " " + spec.basis.range_mode.label();
  if (!spec.include_beta_nugget) label += " no-nugget";
  return label;
}

std::string cv_table_csv(const std::vector<CVReport>& reports) {
  std::vector<std::string> rows;
  std::set<int, std::greater<int>> ranks;
  for (const auto& r : reports) {
    if (std::find(rows.begin(), rows.end(), r.model_label) == rows.end()) rows.push_back(r.model_label);
    ranks.insert(r.rank);
  }
  struct Metric {
    const char* name;
    double (*get)(const CVReport&);
  };
  const Metric metrics[] = {
      {"lta_r2", [](const CVReport& r) { return r.lta ? r.lta->r2 : kNaN; }},
      {"lta_rmse", [](const CVReport& r) { return r.lta ? r.lta->rmse : kNaN; }},
      {"two_week_r2", [](const CVReport& r) { return r.two_week.r2; }},
      {"two_week_rmse", [](const CVReport& r) { return r.two_week.rmse; }},
  };
  std::ostringstream os;
  os << "model,metric";
  for (int k : ranks) os << ',' << k;
  os << '\n';
  for (const auto& row : rows) {
    for (const auto& m : metrics) {
      os << row << ',' << m.name;
      for (int k : ranks) {
        os << ',';
        for (const auto& r : reports) {
          if (r.model_label == row && r.rank == k) {
            os << format_double(m.get(r));
            break;
          }
        }
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace rrst
