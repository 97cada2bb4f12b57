#include "rrst/geometry.hpp"

#include "rrst/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rrst {

namespace {

void require_finite(std::span<const Point> pts, const char* what) {
  for (const auto& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw InputError(std::string(what) + ": non-finite coordinate");
    }
  }
}

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

MatrixXd pairwise_distances(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) {
    throw InputError("pairwise_distances: empty point list");
  }
  require_finite(a, "pairwise_distances");
  require_finite(b, "pairwise_distances");
  MatrixXd d(a.size(), b.size());
  for (std::size_t j = 0; j < b.size(); ++j) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      d(i, j) = distance(a[i], b[j]);
    }
  }
  return d;
}

MatrixXd pairwise_distances(std::span<const Point> a) {
  if (a.empty()) throw InputError("pairwise_distances: empty point list");
  require_finite(a, "pairwise_distances");
  const auto n = static_cast<Eigen::Index>(a.size());
  MatrixXd d(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    d(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      d(i, j) = d(j, i) = distance(a[i], a[j]);
    }
  }
  return d;
}

double max_pairwise_distance(std::span<const Point> pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      best = std::max(best, distance(pts[i], pts[j]));
    }
  }
  return best;
}

double coverage_criterion(std::span<const Point> candidates,
                          std::span<const std::size_t> selected) {
  double total = 0.0;
  for (const auto& c : candidates) {
    double best = std::numeric_limits<double>::infinity();
    for (auto s : selected) best = std::min(best, distance(c, candidates[s]));
    total += best;
  }
  return total;
}

std::vector<std::size_t> select_knot_indices(std::span<const Point> candidates,
                                             std::size_t K, std::uint64_t seed) {
  const std::size_t n = candidates.size();
  if (K < 1) throw InputError("select_knots: K must be at least 1");
  if (K > n) {
    throw InputError("select_knots: K = " + std::to_string(K) + " exceeds " +
                     std::to_string(n) + " candidates");
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (K == n) return all;

  const MatrixXd d = pairwise_distances(candidates);
  const double inf = std::numeric_limits<double>::infinity();

  // Greedy forward selection.
  std::vector<std::size_t> chosen;
  std::vector<char> is_chosen(n, 0);
  VectorXd nearest = VectorXd::Constant(n, inf);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best_c = n;
    double best_val = inf;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_chosen[c]) continue;
      const double val = nearest.cwiseMin(d.col(c)).sum();
      if (val < best_val) {
        best_val = val;
        best_c = c;
      }
    }
    chosen.push_back(best_c);
    is_chosen[best_c] = 1;
    nearest = nearest.cwiseMin(d.col(best_c));
  }

  // Swap descent using nearest / second-nearest bookkeeping.
  std::vector<double> d1(n), d2(n);
  std::vector<std::size_t> slot1(n);
  auto refresh = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      d1[i] = d2[i] = inf;
      slot1[i] = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double v = d(i, chosen[k]);
        if (v < d1[i]) {
          d2[i] = d1[i];
          d1[i] = v;
          slot1[i] = k;
        } else if (v < d2[i]) {
          d2[i] = v;
        }
      }
    }
  };
  refresh();
  double current = std::accumulate(d1.begin(), d1.end(), 0.0);

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  constexpr int kMaxPasses = 1000;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool improved = false;
    for (std::size_t k : order) {
      std::size_t best_c = n;
      double best_val = current;
      for (std::size_t c = 0; c < n; ++c) {
        if (is_chosen[c]) continue;
        double val = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double keep = slot1[i] == k ? d2[i] : d1[i];
          val += std::min(keep, d(i, c));
        }
        if (val < best_val - 1e-12 * std::max(1.0, current)) {
          best_val = val;
          best_c = c;
        }
      }
      if (best_c < n) {
        is_chosen[chosen[k]] = 0;
        chosen[k] = best_c;
        is_chosen[best_c] = 1;
        refresh();
        current = std::accumulate(d1.begin(), d1.end(), 0.0);
        improved = true;
      }
    }
    if (!improved) break;
  }

  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

KnotSet select_knots(std::span<const Point> candidates, std::size_t K,
                     std::uint64_t seed, KnotSource source) {
  KnotSet out;
  out.source = source;
  for (auto i : select_knot_indices(candidates, K, seed)) {
    out.knots.push_back(candidates[i]);
  }
  return out;
}

std::vector<Point> convex_hull(std::span<const Point> pts) {
  std::vector<Point> p(pts.begin(), pts.end());
  std::sort(p.begin(), p.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Point> hull(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], p[i - 1]) <= 0) --k;
    hull[k++] = p[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_convex_polygon(std::span<const Point> hull, const Point& p, double tol) {
  const std::size_t h = hull.size();
  if (h < 3) return false;
  for (std::size_t i = 0; i < h; ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % h];
    const double len = distance(a, b);
    if (cross(a, b, p) < -tol * std::max(1.0, len)) return false;
  }
  return true;
}

std::vector<Point> grid_candidates(std::span<const Point> sites, double cell_km) {
  if (!(cell_km > 0.0)) throw InputError("grid_candidates: cell_km must be positive");
  require_finite(sites, "grid_candidates");
  const auto hull = convex_hull(sites);
  if (hull.size() < 3) {
    throw InputError("grid_candidates: sites are collinear or degenerate");
  }
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a.x * b.y - b.x * a.y;
  }
  if (std::abs(area) < 1e-12) {
    throw InputError("grid_candidates: convex hull has zero area");
  }

  double xmin = hull[0].x, xmax = hull[0].x, ymin = hull[0].y, ymax = hull[0].y;
  for (const auto& v : hull) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const auto nx = static_cast<long>(std::ceil((xmax - xmin) / cell_km - 1e-12));
  const auto ny = static_cast<long>(std::ceil((ymax - ymin) / cell_km - 1e-12));
  std::vector<Point> out;
  for (long j = 0; j < std::max(ny, 1L); ++j) {
    for (long i = 0; i < std::max(nx, 1L); ++i) {
      const Point c{xmin + (i + 0.5) * cell_km, ymin + (j + 0.5) * cell_km};
      if (inside_convex_polygon(hull, c)) out.push_back(c);
    }
  }
  return out;
}

}  // namespace rrst
