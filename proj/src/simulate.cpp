#include "rrst/simulate.hpp"

#include "rrst/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace rrst {

std::size_t SimLayout::num_observations() const {
  std::size_t n = 0;
  for (const auto& s : schedule) n += s.size();
  return n;
}

void SimLayout::validate() const {
  if (sites.empty()) throw InputError("SimLayout: no sites");
  if (schedule.size() != sites.size()) throw InputError("SimLayout: schedule/site count mismatch");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].empty()) throw InputError("SimLayout: site '" + sites[i].id + "' has an empty schedule");
    for (int t : schedule[i]) {
      if (t < 0 || t >= num_periods) {
        throw InputError("SimLayout: period " + std::to_string(t) + " outside [0, " +
                         std::to_string(num_periods) + ")");
      }
    }
  }
  truth.validate(true);
  if (alpha.size() != truth.m()) throw InputError("SimLayout: one alpha block per field required");
}

namespace {

std::string site_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", prefix, i + 1);
  return buf;
}

VectorXd standard_normals(Rng& rng, Eigen::Index n) {
  VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

}  // namespace

SimLayout make_archetype_layout(int n_fixed, int n_snapshot, int n_home, int num_periods,
                                std::uint64_t seed, int m) {
  if (n_fixed < 0 || n_snapshot < 0 || n_home < 0) throw InputError("archetype counts must be >= 0");
  if (n_fixed + n_snapshot + n_home == 0) throw InputError("archetype layout needs at least one site");
  if (num_periods < 4) throw InputError("archetype layout needs at least 4 periods");
  if (m < 1) throw InputError("archetype layout needs m >= 1");

  SimLayout L;
  L.num_periods = num_periods;
  L.seed = seed;
  L.sites = SiteTable({"lu1"});
  Rng rng(seed);

  const int snap[3] = {num_periods / 6, num_periods / 2, (5 * num_periods) / 6};
  auto add = [&](char prefix, int i, SiteKind kind) {
    Site s;
    s.id = site_id(prefix, i);
    s.kind = kind;
    s.coord = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)};
    s.covariates = VectorXd::Constant(1, rng.normal());
    L.sites.add(s);
    std::vector<int> periods;
    switch (kind) {
      case SiteKind::AQS_FIXED:
        for (int t = 0; t < num_periods; ++t) periods.push_back(t);
        break;
      case SiteKind::SNAPSHOT:
        periods.assign(std::begin(snap), std::end(snap));
        break;
      case SiteKind::HOME: {
        const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_periods)));
        int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_periods - 1)));
        if (b >= a) ++b;
        periods = {std::min(a, b), std::max(a, b)};
        break;
      }
    }
    L.schedule.push_back(std::move(periods));
  };
  for (int i = 0; i < n_fixed; ++i) add('F', i, SiteKind::AQS_FIXED);
  for (int i = 0; i < n_snapshot; ++i) add('S', i, SiteKind::SNAPSHOT);
  for (int i = 0; i < n_home; ++i) add('H', i, SiteKind::HOME);

  const double sills[2] = {0.2, 0.05};
  const double nuggets[2] = {0.02, 0.01};
  std::vector<double> theta_P;
  for (int j = 0; j < m; ++j) {
    L.truth.theta_B.push_back({25.0, sills[std::min(j, 1)], 0.0});
    theta_P.push_back(nuggets[std::min(j, 1)]);
    VectorXd a(2);
    a << (j == 0 ? 3.0 : 0.3), (j == 0 ? 0.2 : 0.05);
    L.alpha.push_back(a);
  }
  L.truth.theta_P = theta_P;
  L.truth.theta_V = {10.0, 0.05, 0.02};
  return L;
}

ObservationSet simulate(const SimLayout& layout, const SpatialBasisSpec& basis_truth,
                        const TemporalBasis& trend_truth) {
  layout.validate();
  const int m = static_cast<int>(layout.truth.m());
  if (trend_truth.m() != m) throw InputError("simulate: temporal basis and truth disagree on m");
  if (trend_truth.num_periods() < layout.num_periods) {
    throw InputError("simulate: temporal basis is shorter than the layout");
  }
  const auto n = static_cast<Eigen::Index>(layout.sites.size());
  const std::vector<Point> coords = layout.sites.coords();
  const Eigen::Index p = static_cast<Eigen::Index>(layout.sites.num_covariates());
  const CovParams& th = layout.truth;
  Rng rng(layout.seed);

  std::unique_ptr<TprsBasis> tprs;
  if (basis_truth.kind == BasisKind::TPRS) tprs = std::make_unique<TprsBasis>(coords, basis_truth.K);

  // Mean of each beta-field.
  MatrixXd beta(n, m);
  for (int j = 0; j < m; ++j) {
    const VectorXd& a = layout.alpha[static_cast<std::size_t>(j)];
    const bool with_xy = tprs && a.size() == 1 + p + 2;
    if (a.size() != 1 + p && !with_xy) {
      throw InputError("simulate: alpha block " + std::to_string(j + 1) + " has the wrong length");
    }
    const MatrixXd xy = with_xy ? tprs->unpenalized_at(coords) : MatrixXd(n, 0);
    for (Eigen::Index s = 0; s < n; ++s) {
      double v = a[0];
      for (Eigen::Index c = 0; c < p; ++c) v += a[1 + c] * layout.sites[static_cast<std::size_t>(s)].covariates[c];
      if (with_xy) v += a[1 + p] * xy(s, 0) + a[2 + p] * xy(s, 1);
      beta(s, j) = v;
    }
  }

  // Spatial component.
  const MatrixXd dist = pairwise_distances(coords);
  for (int j = 0; j < m; ++j) {
    const double tau2 = th.theta_B[j].partial_sill;
    if (tau2 == 0.0) continue;
    switch (basis_truth.kind) {
      case BasisKind::NONE:
        break;
      case BasisKind::FULL: {
        const Cholesky ch = robust_cholesky(tau2 * exp_corr(dist, th.theta_B[j].range), tau2,
                                            "simulated beta-field " + std::to_string(j + 1));
        beta.col(j) += ch.llt.matrixL() * standard_normals(rng, n);
        break;
      }
      case BasisKind::LRK: {
        const KnotSet knots = basis_truth.knots.knots.empty()
                                  ? select_knots(coords, static_cast<std::size_t>(basis_truth.K), layout.seed)
                                  : basis_truth.knots;
        const MatrixXd Z = LrkBasis(knots.knots, th.theta_B[j].range).penalized_at(coords);
        beta.col(j) += Z * (std::sqrt(tau2) * standard_normals(rng, Z.cols()));
        break;
      }
      case BasisKind::TPRS: {
        const MatrixXd& Z = tprs->penalized();
        beta.col(j) += Z * (std::sqrt(tau2) * standard_normals(rng, Z.cols()));
        break;
      }
    }
  }
  // Site effects.
  if (th.theta_P) {
    for (int j = 0; j < m; ++j) beta.col(j) += std::sqrt((*th.theta_P)[j]) * standard_normals(rng, n);
  }

  // Residual field period by period.
  std::vector<std::vector<int>> by_period(static_cast<std::size_t>(layout.num_periods));
  for (Eigen::Index s = 0; s < n; ++s) {
    for (int t : layout.schedule[static_cast<std::size_t>(s)]) by_period[static_cast<std::size_t>(t)].push_back(static_cast<int>(s));
  }
  ObservationSet out;
  out.set_anchor_day(layout.anchor_day);
  for (int t = 0; t < layout.num_periods; ++t) {
    const auto& idx = by_period[static_cast<std::size_t>(t)];
    if (idx.empty()) continue;
    const auto nt = static_cast<Eigen::Index>(idx.size());
    VectorXd v = VectorXd::Zero(nt);
    if (th.theta_V.partial_sill + th.theta_V.nugget > 0.0) {
      MatrixXd S(nt, nt);
      for (Eigen::Index a = 0; a < nt; ++a) {
        for (Eigen::Index b = 0; b < nt; ++b) {
          S(a, b) = th.theta_V.partial_sill * std::exp(-dist(idx[a], idx[b]) / th.theta_V.range);
        }
        S(a, a) += th.theta_V.nugget;
      }
      const Cholesky ch = robust_cholesky(S, th.theta_V.partial_sill + th.theta_V.nugget,
                                          "simulated residual period " + std::to_string(t));
      v = ch.llt.matrixL() * standard_normals(rng, nt);
    }
    for (Eigen::Index a = 0; a < nt; ++a) {
      double y = v[a];
      for (int j = 0; j < m; ++j) y += trend_truth(t, j) * beta(idx[a], j);
      out.add({layout.sites[static_cast<std::size_t>(idx[a])].id, t, y});
    }
  }
  return out;
}

std::string truth_json(const SimLayout& layout, const SpatialBasisSpec& basis_truth,
                       const TemporalBasis& trend_truth) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["generator"] = Rng::kGeneratorId;
  j["seed"] = layout.seed;
  j["num_periods"] = layout.num_periods;
  j["anchor_day"] = layout.anchor_day;
  j["basis"] = {{"kind", to_string(basis_truth.kind)},
                {"K", basis_truth.K},
                {"range_mode", basis_truth.range_mode.label()}};
  ordered_json tb = ordered_json::array();
  for (const auto& b : layout.truth.theta_B) tb.push_back({{"range", b.range}, {"partial_sill", b.partial_sill}});
  j["theta_B"] = tb;
  j["theta_P"] = layout.truth.theta_P ? ordered_json(*layout.truth.theta_P) : ordered_json(nullptr);
  j["theta_V"] = {{"range", layout.truth.theta_V.range},
                  {"partial_sill", layout.truth.theta_V.partial_sill},
                  {"nugget", layout.truth.theta_V.nugget}};
  ordered_json alpha = ordered_json::array();
  for (const auto& a : layout.alpha) alpha.push_back(std::vector<double>(a.data(), a.data() + a.size()));
  j["alpha"] = alpha;
  ordered_json trends = ordered_json::array();
  for (int t = 0; t < trend_truth.num_periods(); ++t) {
    std::vector<double> row;
    for (int c = 0; c < trend_truth.m(); ++c) row.push_back(trend_truth(t, c));
    trends.push_back(row);
  }
  j["trends"] = trends;
  return j.dump(2) + "\n";
}

}  // namespace rrst
