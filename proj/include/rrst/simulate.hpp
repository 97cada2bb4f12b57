#pragma once

#include "rrst/basis.hpp"
#include "rrst/covariance.hpp"
#include "rrst/data.hpp"
#include "rrst/temporal.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rrst {

/// Synthetic monitoring design plus the true parameters to simulate from.
struct SimLayout {
  SiteTable sites;
  std::vector<std::vector<int>> schedule;  // observed periods per site, parallel to sites
  int num_periods = 0;
  int anchor_day = 0;
  CovParams truth;
  /// True coefficients, per field: [intercept, covariates..., (tprs_x, tprs_y)].
  std::vector<VectorXd> alpha;
  std::uint64_t seed = 1;

  std::size_t num_observations() const;
  void validate() const;
};

/// Archetype sampling design on a 100 x 100 km square: fixed sites observed
/// in every period, snapshot sites in three shared periods (spread over the
/// record), home sites in two distinct random periods each. Sites carry one
/// covariate, "lu1", drawn standard normal. Default truth: two fields with
/// ranges of 25 km, partial sills 0.2 and 0.05, site nuggets 0.02 and 0.01,
/// and a residual field with range 10 km, sill 0.05 and nugget 0.02;
/// alpha = [3, 0.2] and [0.3, 0.05].
SimLayout make_archetype_layout(int n_fixed, int n_snapshot, int n_home, int num_periods,
                                std::uint64_t seed, int m = 2);

/// Draws Y = F X alpha + F Z_B delta + F P + V.
///
/// basis_truth selects how the beta-fields are generated: FULL draws each
/// field from its exponential covariance over the sites; LRK and TPRS draw
/// delta_j ~ N(0, tau_j^2 I) on the corresponding basis built over the
/// layout's sites; NONE draws no spatial component. When basis_truth is TPRS
/// the alpha blocks carry the extra [x, y] coefficients in standardized
/// coordinates. Deterministic per layout.seed.
ObservationSet simulate(const SimLayout& layout, const SpatialBasisSpec& basis_truth,
                        const TemporalBasis& trend_truth);

/// Truth sidecar: generator id, seed, parameters and coefficients as JSON text.
std::string truth_json(const SimLayout& layout, const SpatialBasisSpec& basis_truth,
                       const TemporalBasis& trend_truth);

}  // namespace rrst
