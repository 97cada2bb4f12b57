#pragma once

#include "rrst/basis.hpp"
#include "rrst/covariance.hpp"
#include "rrst/data.hpp"
#include "rrst/temporal.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace rrst {

struct OptimizerOptions {
  int max_iterations = 300;
  double rel_tol = 1e-8;   // relative log-likelihood change
  double grad_tol = 1e-5;  // projected gradient infinity norm, log scale
  int multistart = 1;
  std::uint64_t seed = 1;
};

struct ModelSpec {
  int m = 2;
  SpatialBasisSpec basis;
  bool include_beta_nugget = true;
  /// Covariate names used in X_j, one list per temporal basis function.
  /// An empty outer list means every covariate enters every X_j.
  std::vector<std::vector<std::string>> covariates;
  double smooth_df = 0.0;  // temporal smoothing; 0 selects the default
  OptimizerOptions optimizer;

  void validate() const;
};

/// Everything a likelihood evaluation needs that does not depend on the
/// covariance parameters, plus the realized spatial basis.
///
/// Rows follow the stacking of the observation vector (period-major, sites
/// varying fastest); columns of F are (field j, site s) -> j n + s.
struct ModelLayout {
  StackedObservations stacked;
  TemporalBasis trends;
  std::vector<Point> coords;  // the n observed sites, in site-table order
  MatrixXd site_dist;         // n x n
  double max_dist = 0.0;
  double y_variance = 0.0;

  MatrixXd FX;  // N x P
  std::vector<MatrixXd> X_blocks;  // per field, n x P_j: intercept, covariates, basis columns
  std::vector<std::vector<int>> covariate_index;  // per field, columns of Site::covariates
  std::size_t num_covariates = 0;                 // covariate columns every site must carry
  std::vector<int> alpha_offset;   // start of field j's coefficients
  std::vector<std::string> alpha_names;
  std::vector<std::string> dependent_columns;  // non-empty when FX is rank deficient

  BasisKind kind = BasisKind::NONE;
  bool include_beta_nugget = true;
  RangeMode range_mode;
  double fixed_range = 0.0;         // resolved when range_mode is fixed
  KnotSet knots;                    // LRK
  std::shared_ptr<const TprsBasis> tprs;
  std::shared_ptr<const LrkBasis> lrk_fixed;
  MatrixXd shared_penalized;        // n x K' for range-free or fixed-range bases
  std::vector<std::string> basis_diagnostics;

  int m() const { return trends.m(); }
  int n() const { return static_cast<int>(coords.size()); }
  Eigen::Index N() const { return static_cast<Eigen::Index>(stacked.rows()); }
  Eigen::Index P() const { return FX.cols(); }
  int num_periods() const { return stacked.num_periods; }
  bool beta_ranges_used() const {
    return (kind == BasisKind::LRK && !range_mode.is_fixed()) || kind == BasisKind::FULL;
  }
  bool has_penalized() const { return kind == BasisKind::LRK || kind == BasisKind::TPRS; }
  int penalized_rank() const;

  /// Penalized block Z_j for field j under the given ranges.
  MatrixXd penalized_for(int field, const CovParams& params) const;
  /// Range in force for field j (fixed value or the parameter).
  double field_range(int field, const CovParams& params) const;
};

/// Builds the layout from validated inputs.
///
/// The n sites are the observed sites in site-table order. For LRK without
/// explicit knots, knots are chosen by space-filling selection over the
/// observed sites (or over grid candidates) using spec.optimizer.seed.
ModelLayout build_layout(const ModelSpec& spec, const SiteTable& sites,
                         const ObservationSet& obs, const TemporalBasis& trends);

/// Design row of field j at an arbitrary site: [1, covariates_j, basis columns].
MatrixXd design_row_block(const ModelLayout& layout, int field, const Site& site);

}  // namespace rrst
