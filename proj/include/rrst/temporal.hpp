#pragma once

#include "rrst/common.hpp"
#include "rrst/data.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace rrst {

/// m smooth temporal functions sampled on the two-week period grid.
/// Column 0 is the constant 1; the others are centered, mutually orthogonal
/// and scaled to unit root-mean-square over the grid.
struct TemporalBasis {
  int anchor_day = 0;
  MatrixXd values;  // periods x m

  int num_periods() const { return static_cast<int>(values.rows()); }
  int m() const { return static_cast<int>(values.cols()); }
  double operator()(int t, int j) const { return values(t, j); }
};

struct TrendDiagnostics {
  std::vector<std::string> sites_used;
  std::vector<double> change_norms;  // imputation change per completion iteration
  int iterations = 0;
  bool monotone = true;
  double smooth_df = 0.0;
};

/// Default smoothing degrees of freedom: 8 per calendar year of data span,
/// clamped to [2, num_periods].
double default_smooth_df(int num_periods);

/// Cubic smoothing-spline hat matrix on an equally spaced grid of n points
/// with trace equal to df (df >= n gives the identity).
MatrixXd smoothing_spline_matrix(int n, double df);

/// Smooth trends by an SVD of the period-by-site data matrix with iterative
/// missing-value completion.
///
/// Sites with at least 2m observations are used. Missing entries start at
/// site mean plus period anomaly and are then replaced by the rank-(m-1)
/// SVD reconstruction of the column-centered matrix until the relative change
/// in the imputed values drops below 1e-6 (at most 500 iterations). The
/// leading m-1 left singular vectors are smoothed with a cubic smoothing
/// spline, centered, Gram-Schmidt orthogonalized and scaled to unit RMS.
/// Each non-constant column is signed to correlate non-negatively with the
/// first used site's centered series. smooth_df = 0 selects
/// default_smooth_df.
TemporalBasis estimate_temporal_basis(const ObservationSet& obs, int m, double smooth_df,
                                      TrendDiagnostics* diagnostics = nullptr);

/// Observations in model stacking order: period-major, sites varying fastest
/// within a period. Site indices refer to `site_ids`.
struct StackedObservations {
  std::vector<std::string> site_ids;
  std::vector<int> row_site;
  std::vector<int> row_period;
  VectorXd y;
  std::vector<int> period_begin;  // row ranges per period, size num_periods + 1
  int num_periods = 0;

  std::size_t rows() const { return row_site.size(); }
  int num_sites() const { return static_cast<int>(site_ids.size()); }
};

/// Stacks observations. Every observed site must appear in `site_ids`;
/// num_periods must exceed every observed period index.
StackedObservations stack_observations(const ObservationSet& obs,
                                       const std::vector<std::string>& site_ids,
                                       int num_periods);

/// N x (m n) map with f_{(s,t),(i,s')} = f_i(t) when s = s'.
Eigen::SparseMatrix<double> build_F(const StackedObservations& stacked,
                                    const TemporalBasis& basis);

struct SiteTrendFit {
  VectorXd coefficients;
  std::vector<int> periods;
  VectorXd observed;
  VectorXd fitted;
};

/// Least-squares fit of one site's series on the basis columns.
SiteTrendFit site_trend_fit(const ObservationSet& obs, const std::string& site_id,
                            const TemporalBasis& basis);

/// Deterministic annual-cycle basis used for simulation: constant, then
/// alternating cosine / sine harmonics with a 26-period (one year) cycle,
/// centered and orthonormalized like an estimated basis.
TemporalBasis seasonal_basis(int num_periods, int m, int anchor_day = 0);

}  // namespace rrst
