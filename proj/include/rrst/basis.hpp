#pragma once

#include "rrst/common.hpp"
#include "rrst/geometry.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrst {

/// Representation of the beta-fields. FULL is the full-rank exponential
/// kriging model, used as the reference the reduced-rank bases approximate.
enum class BasisKind { NONE, LRK, TPRS, FULL };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& s);

/// Range handling for range-dependent bases (LRK, FULL).
struct RangeMode {
  enum class Kind { ESTIMATED, FIXED };
  Kind kind = Kind::ESTIMATED;
  double value_km = 0.0;  // FIXED with an absolute value
  double fraction_of_max = 0.0;  // FIXED as a fraction of the observed maximum distance

  static RangeMode estimated() { return {}; }
  static RangeMode fixed(double km) { return {Kind::FIXED, km, 0.0}; }
  static RangeMode fixed_fraction(double f) { return {Kind::FIXED, 0.0, f}; }

  bool is_fixed() const { return kind == Kind::FIXED; }
  /// Fixed range in km given the observed maximum inter-site distance.
  double resolve(double max_dist_km) const;
  /// est, fixed:VALUE, fixed:max, fixed:max/2, ...
  std::string label() const;
  static RangeMode parse(const std::string& s);
};

enum class KnotPlacement { SITES, GRID };

struct SpatialBasisSpec {
  BasisKind kind = BasisKind::TPRS;
  int K = 0;
  KnotSet knots;  // LRK: explicit knots; empty means select at fit time
  KnotPlacement placement = KnotPlacement::SITES;
  double grid_cell_km = 2.5;
  RangeMode range_mode;

  bool range_dependent() const { return kind == BasisKind::LRK || kind == BasisKind::FULL; }
  /// Penalized columns per field: K (LRK), K - 3 (TPRS), 0 (NONE, FULL).
  int penalized_rank() const;
  void validate() const;
};

/// Realized basis at the training sites.
struct SpatialBasis {
  BasisKind kind = BasisKind::NONE;
  MatrixXd unpenalized;  // n x q columns appended to every X_j
  MatrixXd penalized;    // n x K'
  bool range_dependent = false;
  std::vector<std::string> diagnostics;
};

/// Symmetric inverse square root of a symmetric PSD matrix. Eigenvalues
/// below floor_rel * max eigenvalue are dropped (their directions map to 0)
/// and counted in *dropped.
MatrixXd inverse_sqrt_psd(const MatrixXd& a, double floor_rel, int* dropped = nullptr);

/// Low-rank kriging basis Z * Omega~^{-1/2} for exponential correlation.
class LrkBasis {
 public:
  LrkBasis(std::vector<Point> knots, double range_km);

  /// Rows C(|s - kappa_j|) Omega~^{-1/2} at the given locations.
  MatrixXd penalized_at(std::span<const Point> pts) const;

  const std::vector<Point>& knots() const { return knots_; }
  double range() const { return range_; }
  const MatrixXd& knot_inverse_sqrt() const { return inv_sqrt_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Point> knots_;
  double range_;
  MatrixXd inv_sqrt_;
  std::vector<std::string> diagnostics_;
};

/// Thin plate radial function (1 / 8 pi) r^2 log r, zero at r = 0.
double tprs_eta(double r);

/// Reduced-rank thin plate regression spline basis.
///
/// Coordinates are centered and divided by their pooled standard deviation.
/// E_ij = eta(|s_i - s_j|) is eigendecomposed, eigenvalues ordered by
/// decreasing magnitude, and the leading K kept (U_K, D_K). W_K spans the
/// null space of T^T U_K with T = [1, x, y]. The penalized block is
///
///   Z* = U_K D_K W_K (W_K^T D_K W_K)^{-1/2}
///
/// with the span of T projected out, Z~ = (I - P_T) Z*. For any fixed
/// smoothing parameter the projection only reparameterizes the unpenalized
/// coefficients, so penalized fits are unchanged while T^T Z~ = 0 holds
/// exactly. A new location s evaluates as
///
///   z(s) = eta(s)^T U_K W_K (W_K^T D_K W_K)^{-1/2} - t(s)^T C
///
/// where eta(s) holds eta(|s - s_i|) against the training sites and
/// C = (T^T T)^{-1} T^T Z*. At a training site eta(s_i)^T U_K = (U_K D_K)_i,
/// so this reproduces the training rows.
class TprsBasis {
 public:
  TprsBasis(std::span<const Point> sites, int K);

  /// Standardized [x, y] at the given locations (the intercept lives in X_j).
  MatrixXd unpenalized_at(std::span<const Point> pts) const;
  MatrixXd penalized_at(std::span<const Point> pts) const;

  const MatrixXd& penalized() const { return penalized_; }
  /// [1, x, y] at the training sites in standardized coordinates.
  const MatrixXd& polynomial() const { return T_; }
  const MatrixXd& eigenvectors() const { return U_K_; }
  const VectorXd& eigenvalues() const { return D_K_; }
  const MatrixXd& null_space() const { return W_K_; }
  /// (W_K^T D_K W_K)^{-1/2}
  const MatrixXd& penalty_inverse_sqrt() const { return penalty_inv_sqrt_; }
  Point center() const { return center_; }
  double scale() const { return scale_; }
  int rank() const { return K_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  Point standardize(const Point& p) const;

  int K_;
  Point center_;
  double scale_ = 1.0;
  std::vector<Point> sites_std_;
  MatrixXd T_;
  MatrixXd U_K_;
  VectorXd D_K_;
  MatrixXd W_K_;
  MatrixXd penalty_inv_sqrt_;
  MatrixXd coef_map_;  // U_K W_K (W_K^T D_K W_K)^{-1/2}
  MatrixXd t_proj_;    // C
  MatrixXd penalized_;
  std::vector<std::string> diagnostics_;
};

SpatialBasis lrk_basis(std::span<const Point> site_coords, const KnotSet& knots, double range_km);
SpatialBasis tprs_basis(std::span<const Point> site_coords, int K);

/// Block-diagonal (m n) x (m K') matrix with m copies of the penalized block.
MatrixXd assemble_Z_B(const SpatialBasis& basis, int m);

}  // namespace rrst
