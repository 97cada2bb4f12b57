#include "rrst/layout.hpp"

#include <algorithm>
#include <unordered_set>

namespace rrst {

void ModelSpec::validate() const {
  if (m < 1) throw InputError("model spec: m must be at least 1");
  basis.validate();
  if (!covariates.empty() && static_cast<int>(covariates.size()) != m) {
    throw InputError("model spec: covariate selection must list one entry per basis function");
  }
  if (optimizer.max_iterations < 1) throw InputError("model spec: max_iterations must be positive");
  if (optimizer.multistart < 1) throw InputError("model spec: multistart must be positive");
}

int ModelLayout::penalized_rank() const {
  switch (kind) {
    case BasisKind::LRK: return static_cast<int>(knots.size());
    case BasisKind::TPRS: return static_cast<int>(shared_penalized.cols());
    default: return 0;
  }
}

double ModelLayout::field_range(int field, const CovParams& params) const {
  if (range_mode.is_fixed()) return fixed_range;
  return params.theta_B.at(field).range;
}

MatrixXd ModelLayout::penalized_for(int field, const CovParams& params) const {
  if (kind == BasisKind::TPRS || (kind == BasisKind::LRK && range_mode.is_fixed())) {
    return shared_penalized;
  }
  if (kind == BasisKind::LRK) {
    return LrkBasis(knots.knots, field_range(field, params)).penalized_at(coords);
  }
  return MatrixXd(n(), 0);
}

MatrixXd design_row_block(const ModelLayout& layout, int field, const Site& site) {
  const auto& cols = layout.covariate_index.at(field);
  if (static_cast<std::size_t>(site.covariates.size()) != layout.num_covariates) {
    throw InputError("site '" + site.id + "' has " + std::to_string(site.covariates.size()) +
                     " covariates, the model expects " + std::to_string(layout.num_covariates));
  }
  const Eigen::Index extra = layout.kind == BasisKind::TPRS ? 2 : 0;
  MatrixXd row(1, 1 + static_cast<Eigen::Index>(cols.size()) + extra);
  row(0, 0) = 1.0;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    row(0, 1 + static_cast<Eigen::Index>(k)) = site.covariates[cols[k]];
  }
  if (extra) {
    const Point p = site.coord;
    row.rightCols(2) = layout.tprs->unpenalized_at(std::span<const Point>(&p, 1));
  }
  return row;
}

ModelLayout build_layout(const ModelSpec& spec, const SiteTable& sites,
                         const ObservationSet& obs, const TemporalBasis& trends) {
  spec.validate();
  if (obs.empty()) throw InputError("build_layout: no observations");
  if (trends.m() != spec.m) {
    throw InputError("build_layout: temporal basis has " + std::to_string(trends.m()) +
                     " functions, spec expects " + std::to_string(spec.m));
  }

  ModelLayout L;
  L.trends = trends;
  L.kind = spec.basis.kind;
  L.include_beta_nugget = spec.include_beta_nugget;
  L.range_mode = spec.basis.range_mode;

  std::unordered_set<std::string> observed;
  for (const auto& r : obs) {
    if (!sites.find(r.site_id)) throw InputError("observation for unknown site '" + r.site_id + "'");
    observed.insert(r.site_id);
  }
  std::vector<std::string> ids;
  std::vector<const Site*> used;
  for (const auto& s : sites) {
    if (observed.count(s.id)) {
      ids.push_back(s.id);
      used.push_back(&s);
      L.coords.push_back(s.coord);
    }
  }
  L.stacked = stack_observations(obs, ids, trends.num_periods());
  L.site_dist = pairwise_distances(L.coords);
  L.max_dist = L.site_dist.maxCoeff();
  const double ybar = L.stacked.y.mean();
  L.y_variance = (L.stacked.y.array() - ybar).square().mean();

  const int m = spec.m;
  const int n = L.n();

  // Covariate selection.
  const auto& names = sites.covariate_names();
  L.num_covariates = names.size();
  for (int j = 0; j < m; ++j) {
    std::vector<int> idx;
    if (spec.covariates.empty()) {
      for (std::size_t k = 0; k < names.size(); ++k) idx.push_back(static_cast<int>(k));
    } else {
      for (const auto& nm : spec.covariates[j]) {
        auto it = std::find(names.begin(), names.end(), nm);
        if (it == names.end()) throw InputError("unknown covariate '" + nm + "'");
        idx.push_back(static_cast<int>(it - names.begin()));
      }
    }
    L.covariate_index.push_back(std::move(idx));
  }

  // Spatial basis.
  switch (L.kind) {
    case BasisKind::TPRS: {
      if (spec.basis.K > n) {
        throw InputError("tprs rank K = " + std::to_string(spec.basis.K) + " exceeds " +
                         std::to_string(n) + " observed sites");
      }
      L.tprs = std::make_shared<TprsBasis>(L.coords, spec.basis.K);
      L.shared_penalized = L.tprs->penalized();
      L.basis_diagnostics = L.tprs->diagnostics();
      break;
    }
    case BasisKind::LRK: {
      if (!spec.basis.knots.knots.empty()) {
        L.knots = spec.basis.knots;
      } else {
        std::vector<Point> candidates =
            spec.basis.placement == KnotPlacement::GRID
                ? grid_candidates(L.coords, spec.basis.grid_cell_km)
                : L.coords;
        if (static_cast<std::size_t>(spec.basis.K) > candidates.size()) {
          throw InputError("lrk rank K = " + std::to_string(spec.basis.K) + " exceeds " +
                           std::to_string(candidates.size()) + " knot candidates");
        }
        L.knots = select_knots(candidates, static_cast<std::size_t>(spec.basis.K),
                               spec.optimizer.seed,
                               spec.basis.placement == KnotPlacement::GRID
                                   ? KnotSource::GRID
                                   : KnotSource::MONITOR_SITES);
      }
      if (L.range_mode.is_fixed()) {
        L.fixed_range = L.range_mode.resolve(L.max_dist);
        L.lrk_fixed = std::make_shared<LrkBasis>(L.knots.knots, L.fixed_range);
        L.shared_penalized = L.lrk_fixed->penalized_at(L.coords);
        L.basis_diagnostics = L.lrk_fixed->diagnostics();
      }
      break;
    }
    case BasisKind::FULL:
      if (L.range_mode.is_fixed()) L.fixed_range = L.range_mode.resolve(L.max_dist);
      break;
    case BasisKind::NONE:
      break;
  }

  // Design blocks and FX.
  Eigen::Index P = 0;
  for (int j = 0; j < m; ++j) {
    L.alpha_offset.push_back(static_cast<int>(P));
    const auto& cols = L.covariate_index[j];
    const std::string tag = "f" + std::to_string(j + 1) + ":";
    L.alpha_names.push_back(tag + "intercept");
    for (int c : cols) L.alpha_names.push_back(tag + names[c]);
    if (L.kind == BasisKind::TPRS) {
      L.alpha_names.push_back(tag + "tprs_x");
      L.alpha_names.push_back(tag + "tprs_y");
    }
    MatrixXd Xj(n, 0);
    for (int s = 0; s < n; ++s) {
      MatrixXd row = design_row_block(L, j, *used[s]);
      if (Xj.cols() == 0) Xj.resize(n, row.cols());
      Xj.row(s) = row;
    }
    P += Xj.cols();
    L.X_blocks.push_back(std::move(Xj));
  }
  const Eigen::Index N = L.N();
  L.FX = MatrixXd::Zero(N, P);
  for (Eigen::Index r = 0; r < N; ++r) {
    const int s = L.stacked.row_site[r];
    const int t = L.stacked.row_period[r];
    for (int j = 0; j < m; ++j) {
      const auto& Xj = L.X_blocks[j];
      L.FX.row(r).segment(L.alpha_offset[j], Xj.cols()) = trends(t, j) * Xj.row(s);
    }
  }

  Eigen::ColPivHouseholderQR<MatrixXd> qr(L.FX);
  qr.setThreshold(1e-10);
  if (qr.rank() < P) {
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < P; ++k) L.dependent_columns.push_back(L.alpha_names[perm[k]]);
  }
  return L;
}

}  // namespace rrst
