#include "rrst/basis.hpp"

#include "rrst/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace rrst {

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::NONE: return "none";
    case BasisKind::LRK: return "lrk";
    case BasisKind::TPRS: return "tprs";
    case BasisKind::FULL: return "full";
  }
  return "none";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "none") return BasisKind::NONE;
  if (s == "lrk") return BasisKind::LRK;
  if (s == "tprs") return BasisKind::TPRS;
  if (s == "full") return BasisKind::FULL;
  throw InputError("unknown basis '" + s + "' (expected none, lrk, tprs or full)");
}

double RangeMode::resolve(double max_dist_km) const {
  if (!is_fixed()) throw InputError("RangeMode::resolve called on an estimated range");
  const double v = fraction_of_max > 0.0 ? fraction_of_max * max_dist_km : value_km;
  if (!(v > 0.0)) throw InputError("fixed range must be positive");
  return v;
}

std::string RangeMode::label() const {
  if (!is_fixed()) return "est";
  if (fraction_of_max > 0.0) {
    if (fraction_of_max == 1.0) return "fixed:max";
    const double inv = 1.0 / fraction_of_max;
    if (std::abs(inv - std::round(inv)) < 1e-12) {
      return "fixed:max/" + std::to_string(static_cast<long>(std::round(inv)));
    }
    return "fixed:max*" + format_double(fraction_of_max);
  }
  return "fixed:" + format_double(value_km);
}

RangeMode RangeMode::parse(const std::string& s) {
  if (s == "est" || s == "estimated") return estimated();
  const std::string prefix = "fixed:";
  if (s.rfind(prefix, 0) != 0) throw InputError("bad range mode '" + s + "'");
  const std::string rest = s.substr(prefix.size());
  auto number = [&s](const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      throw InputError("bad range mode '" + s + "'");
    }
    if (used != text.size() || !(v > 0.0) || !std::isfinite(v)) {
      throw InputError("bad range mode '" + s + "'");
    }
    return v;
  };
  if (rest == "max") return fixed_fraction(1.0);
  if (rest.rfind("max/", 0) == 0) return fixed_fraction(1.0 / number(rest.substr(4)));
  if (rest.rfind("max*", 0) == 0) return fixed_fraction(number(rest.substr(4)));
  return fixed(number(rest));
}

int SpatialBasisSpec::penalized_rank() const {
  switch (kind) {
    case BasisKind::LRK: return K;
    case BasisKind::TPRS: return K - 3;
    default: return 0;
  }
}

void SpatialBasisSpec::validate() const {
  switch (kind) {
    case BasisKind::NONE:
      if (K != 0) throw InputError("basis none requires K = 0");
      break;
    case BasisKind::TPRS:
      if (K < 4) throw InputError("tprs basis requires K >= 4");
      break;
    case BasisKind::LRK:
      if (K < 1) throw InputError("lrk basis requires K >= 1");
      if (!knots.knots.empty() && static_cast<int>(knots.size()) != K) {
        throw InputError("lrk basis: number of knots differs from K");
      }
      break;
    case BasisKind::FULL:
      break;
  }
  if (range_dependent() && range_mode.is_fixed() && range_mode.fraction_of_max <= 0.0 &&
      !(range_mode.value_km > 0.0)) {
    throw InputError("fixed range must be positive");
  }
  if (placement == KnotPlacement::GRID && !(grid_cell_km > 0.0)) {
    throw InputError("grid cell size must be positive");
  }
}

MatrixXd inverse_sqrt_psd(const MatrixXd& a, double floor_rel, int* dropped) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (a + a.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("inverse_sqrt_psd: eigensolver failed");
  const VectorXd& lam = eig.eigenvalues();
  const double top = lam.size() ? lam.maxCoeff() : 0.0;
  if (!(top > 0.0)) throw NumericalError("inverse_sqrt_psd: matrix has no positive eigenvalue");
  const double floor = floor_rel * top;
  VectorXd scale(lam.size());
  int n_drop = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] > floor) {
      scale[i] = 1.0 / std::sqrt(lam[i]);
    } else {
      scale[i] = 0.0;
      ++n_drop;
    }
  }
  if (dropped) *dropped = n_drop;
  return eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
}

LrkBasis::LrkBasis(std::vector<Point> knots, double range_km)
    : knots_(std::move(knots)), range_(range_km) {
  if (knots_.empty()) throw InputError("lrk_basis: no knots");
  if (!(range_ > 0.0)) throw InputError("lrk_basis: range must be positive");
  const MatrixXd kd = pairwise_distances(knots_);
  for (Eigen::Index i = 0; i < kd.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < kd.cols(); ++j) {
      if (kd(i, j) <= kCoincidentKm) {
        throw NumericalError("lrk_basis: knots " + std::to_string(i) + " and " +
                             std::to_string(j) + " coincide; knot correlation is singular");
      }
    }
  }
  MatrixXd omega = exp_corr(kd, range_);
  constexpr double kFloor = 1e-12;
  int dropped = 0;
  inv_sqrt_ = inverse_sqrt_psd(omega, kFloor, &dropped);
  if (dropped > 0) {
    omega.diagonal().array() += 1e-10;
    inv_sqrt_ = inverse_sqrt_psd(omega, kFloor, &dropped);
    diagnostics_.push_back("knot correlation jittered by 1e-10");
    if (dropped > 0) {
      diagnostics_.push_back("dropped " + std::to_string(dropped) +
                             " near-singular knot directions");
    }
  }
}

MatrixXd LrkBasis::penalized_at(std::span<const Point> pts) const {
  return exp_corr(pairwise_distances(pts, knots_), range_) * inv_sqrt_;
}

double tprs_eta(double r) {
  if (r <= 0.0) return 0.0;
  return r * r * std::log(r) / (8.0 * std::numbers::pi);
}

TprsBasis::TprsBasis(std::span<const Point> sites, int K) : K_(K) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  if (K < 4) throw InputError("tprs_basis: K must be at least 4");
  if (K > n) throw InputError("tprs_basis: K exceeds the number of sites");

  double sx = 0.0, sy = 0.0;
  for (const auto& p : sites) {
    sx += p.x;
    sy += p.y;
  }
  center_ = {sx / n, sy / n};
  double ss = 0.0;
  for (const auto& p : sites) {
    ss += (p.x - center_.x) * (p.x - center_.x) + (p.y - center_.y) * (p.y - center_.y);
  }
  scale_ = std::sqrt(ss / (2.0 * n));
  if (!(scale_ > 0.0)) throw InputError("tprs_basis: all sites coincide");
  for (const auto& p : sites) sites_std_.push_back(standardize(p));

  T_.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    T_(i, 0) = 1.0;
    T_(i, 1) = sites_std_[i].x;
    T_(i, 2) = sites_std_[i].y;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> tqr(T_);
  tqr.setThreshold(1e-9);
  if (tqr.rank() < 3) throw InputError("tprs_basis: sites are collinear");

  MatrixXd E(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    E(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      E(i, j) = E(j, i) = tprs_eta(distance(sites_std_[i], sites_std_[j]));
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(E);
  if (eig.info() != Eigen::Success) throw NumericalError("tprs_basis: eigensolver failed");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const VectorXd& lam = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(lam[a]) > std::abs(lam[b]);
  });
  U_K_.resize(n, K);
  D_K_.resize(K);
  for (int k = 0; k < K; ++k) {
    U_K_.col(k) = eig.eigenvectors().col(order[k]);
    D_K_[k] = lam[order[k]];
  }
  if (K < n) {
    const double a = std::abs(lam[order[K - 1]]);
    const double b = std::abs(lam[order[K]]);
    if (a - b <= 1e-8 * std::abs(lam[order[0]])) {
      diagnostics_.push_back("eigenvalue magnitude tie at truncation rank " + std::to_string(K));
    }
  }

  // Orthonormal basis of the null space of T^T U_K.
  const MatrixXd ut = U_K_.transpose() * T_;  // K x 3
  Eigen::HouseholderQR<MatrixXd> qr(ut);
  const MatrixXd Qfull = qr.householderQ() * MatrixXd::Identity(K, K);
  W_K_ = Qfull.rightCols(K - 3);

  const MatrixXd penalty = W_K_.transpose() * D_K_.asDiagonal() * W_K_;
  int dropped = 0;
  penalty_inv_sqrt_ = inverse_sqrt_psd(penalty, 1e-12, &dropped);
  if (dropped > 0) {
    diagnostics_.push_back("dropped " + std::to_string(dropped) +
                           " null directions of the thin plate penalty");
  }
  coef_map_ = U_K_ * W_K_ * penalty_inv_sqrt_;
  const MatrixXd z_star = U_K_ * D_K_.asDiagonal() * W_K_ * penalty_inv_sqrt_;
  t_proj_ = (T_.transpose() * T_).ldlt().solve(T_.transpose() * z_star);
  penalized_ = z_star - T_ * t_proj_;
}

Point TprsBasis::standardize(const Point& p) const {
  return {(p.x - center_.x) / scale_, (p.y - center_.y) / scale_};
}

MatrixXd TprsBasis::unpenalized_at(std::span<const Point> pts) const {
  MatrixXd out(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point q = standardize(pts[i]);
    out(i, 0) = q.x;
    out(i, 1) = q.y;
  }
  return out;
}

MatrixXd TprsBasis::penalized_at(std::span<const Point> pts) const {
  const auto n = static_cast<Eigen::Index>(sites_std_.size());
  const auto r = static_cast<Eigen::Index>(pts.size());
  MatrixXd eta(r, n), t(r, 3);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Point q = standardize(pts[i]);
    for (Eigen::Index j = 0; j < n; ++j) eta(i, j) = tprs_eta(distance(q, sites_std_[j]));
    t(i, 0) = 1.0;
    t(i, 1) = q.x;
    t(i, 2) = q.y;
  }
  return eta * coef_map_ - t * t_proj_;
}

SpatialBasis lrk_basis(std::span<const Point> site_coords, const KnotSet& knots, double range_km) {
  LrkBasis lrk(knots.knots, range_km);
  SpatialBasis out;
  out.kind = BasisKind::LRK;
  out.unpenalized.resize(static_cast<Eigen::Index>(site_coords.size()), 0);
  out.penalized = lrk.penalized_at(site_coords);
  out.range_dependent = true;
  out.diagnostics = lrk.diagnostics();
  return out;
}

SpatialBasis tprs_basis(std::span<const Point> site_coords, int K) {
  TprsBasis tprs(site_coords, K);
  SpatialBasis out;
  out.kind = BasisKind::TPRS;
  out.unpenalized = tprs.unpenalized_at(site_coords);
  out.penalized = tprs.penalized();
  out.range_dependent = false;
  out.diagnostics = tprs.diagnostics();
  return out;
}

MatrixXd assemble_Z_B(const SpatialBasis& basis, int m) {
  if (m < 1) throw InputError("assemble_Z_B: m must be at least 1");
  const auto n = basis.penalized.rows();
  const auto k = basis.penalized.cols();
  MatrixXd zb = MatrixXd::Zero(m * n, m * k);
  for (int j = 0; j < m; ++j) zb.block(j * n, j * k, n, k) = basis.penalized;
  return zb;
}

}  // namespace rrst
