#pragma once

#include "rrst/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace rrst {

enum class KnotSource { MONITOR_SITES, GRID };

struct KnotSet {
  std::vector<Point> knots;
  KnotSource source = KnotSource::MONITOR_SITES;

  std::size_t size() const { return knots.size(); }
};

/// Euclidean distances, entry (i, j) = |a_i - b_j|.
MatrixXd pairwise_distances(std::span<const Point> a, std::span<const Point> b);
MatrixXd pairwise_distances(std::span<const Point> a);

double max_pairwise_distance(std::span<const Point> pts);

/// Sum over candidates of the distance to the nearest selected point.
double coverage_criterion(std::span<const Point> candidates,
                          std::span<const std::size_t> selected);

/// Space-filling selection of K of the candidate points.
///
/// Minimizes the power-1 cover criterion (sum of nearest-knot distances) by
/// greedy forward selection followed by point-swap descent to a local
/// optimum. The seed permutes the order in which knots are visited during
/// swap passes; within a visit ties go to the lowest candidate index.
/// Returns the indices of the chosen candidates in ascending order.
std::vector<std::size_t> select_knot_indices(std::span<const Point> candidates,
                                             std::size_t K, std::uint64_t seed);

KnotSet select_knots(std::span<const Point> candidates, std::size_t K,
                     std::uint64_t seed,
                     KnotSource source = KnotSource::MONITOR_SITES);

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
std::vector<Point> convex_hull(std::span<const Point> pts);

/// Inclusive point-in-convex-polygon test for a counter-clockwise hull.
bool inside_convex_polygon(std::span<const Point> hull, const Point& p,
                           double tol = 1e-9);

/// Centers of the cells of side cell_km, anchored at the lower-left corner
/// of the hull's bounding box, whose centers lie inside the convex hull.
std::vector<Point> grid_candidates(std::span<const Point> sites, double cell_km);

}  // namespace rrst
