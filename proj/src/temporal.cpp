#include "rrst/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace rrst {

namespace {

constexpr double kDaysPerPeriod = 14.0;
constexpr double kDaysPerYear = 365.25;

// Centers columns 1.. of `cols`, orthogonalizes them in order and scales
// each to unit RMS. Column 0 is set to the constant 1.
void finish_basis(MatrixXd& cols) {
  const auto T = cols.rows();
  cols.col(0).setOnes();
  for (Eigen::Index j = 1; j < cols.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < j; ++k) {
        const double proj = cols.col(k).dot(cols.col(j)) / cols.col(k).squaredNorm();
        cols.col(j) -= proj * cols.col(k);
      }
    }
    const double rms = cols.col(j).norm() / std::sqrt(static_cast<double>(T));
    if (!(rms > 1e-12)) throw NumericalError("temporal basis column " + std::to_string(j) +
                                             " vanished after smoothing");
    cols.col(j) /= rms;
  }
}

}  // namespace

double default_smooth_df(int num_periods) {
  const double years = num_periods * kDaysPerPeriod / kDaysPerYear;
  return std::clamp(8.0 * years, 2.0, static_cast<double>(std::max(num_periods, 2)));
}

MatrixXd smoothing_spline_matrix(int n, double df) {
  if (n < 1) throw InputError("smoothing_spline_matrix: empty grid");
  if (n < 3 || df >= n) return MatrixXd::Identity(n, n);
  if (df < 2.0) throw InputError("smoothing_spline_matrix: df must be at least 2");

  // Reinsch form with unit spacing: penalty matrix Q R^{-1} Q^T.
  const int m = n - 2;
  MatrixXd Q = MatrixXd::Zero(n, m);
  MatrixXd R = MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    Q(j, j) = 1.0;
    Q(j + 1, j) = -2.0;
    Q(j + 2, j) = 1.0;
    R(j, j) = 2.0 / 3.0;
    if (j + 1 < m) R(j, j + 1) = R(j + 1, j) = 1.0 / 6.0;
  }
  const MatrixXd Kpen = Q * R.llt().solve(Q.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Kpen);
  const VectorXd k = eig.eigenvalues().cwiseMax(0.0);

  auto trace_at = [&](double log_lambda) {
    const double lambda = std::exp(log_lambda);
    return (1.0 / (1.0 + lambda * k.array())).sum();
  };
  double lo = -40.0, hi = 40.0;  // trace decreases in lambda
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (trace_at(mid) > df) lo = mid; else hi = mid;
  }
  const double lambda = std::exp(0.5 * (lo + hi));
  const VectorXd shrink = (1.0 / (1.0 + lambda * k.array())).matrix();
  return eig.eigenvectors() * shrink.asDiagonal() * eig.eigenvectors().transpose();
}

TemporalBasis estimate_temporal_basis(const ObservationSet& obs, int m, double smooth_df,
                                      TrendDiagnostics* diagnostics) {
  if (m < 1) throw InputError("estimate_temporal_basis: m must be at least 1");
  if (obs.empty()) throw InputError("estimate_temporal_basis: no observations");
  const int T = obs.num_periods();
  TemporalBasis basis;
  basis.anchor_day = obs.anchor_day();
  basis.values = MatrixXd::Ones(T, m);
  if (smooth_df == 0.0) smooth_df = default_smooth_df(T);
  TrendDiagnostics diag;
  diag.smooth_df = smooth_df;
  if (m == 1) {
    if (diagnostics) *diagnostics = diag;
    return basis;
  }
  if (smooth_df < 2.0) throw InputError("estimate_temporal_basis: smooth_df must be at least 2");

  std::unordered_map<std::string, int> counts;
  for (const auto& r : obs) ++counts[r.site_id];
  std::vector<std::string> used;
  for (const auto& id : obs.site_ids()) {
    if (counts[id] >= 2 * m) used.push_back(id);
  }
  if (static_cast<int>(used.size()) < m) {
    throw InputError("estimate_temporal_basis: need at least " + std::to_string(m) +
                     " sites with " + std::to_string(2 * m) + " or more observations, found " +
                     std::to_string(used.size()));
  }
  std::unordered_map<std::string, int> col_of;
  for (std::size_t s = 0; s < used.size(); ++s) col_of[used[s]] = static_cast<int>(s);
  const auto S = static_cast<Eigen::Index>(used.size());

  MatrixXd Y = MatrixXd::Zero(T, S);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, S, false);
  for (const auto& r : obs) {
    auto it = col_of.find(r.site_id);
    if (it == col_of.end()) continue;
    Y(r.period, it->second) = r.value;
    seen(r.period, it->second) = true;
  }

  // Site mean plus period anomaly for the initial fill.
  VectorXd site_mean(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    double sum = 0.0;
    int n = 0;
    for (int t = 0; t < T; ++t) {
      if (seen(t, s)) {
        sum += Y(t, s);
        ++n;
      }
    }
    site_mean[s] = sum / n;
  }
  std::vector<std::pair<int, Eigen::Index>> missing;
  for (int t = 0; t < T; ++t) {
    double anomaly = 0.0;
    int n = 0;
    for (Eigen::Index s = 0; s < S; ++s) {
      if (seen(t, s)) {
        anomaly += Y(t, s) - site_mean[s];
        ++n;
      }
    }
    anomaly = n > 0 ? anomaly / n : 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
      if (!seen(t, s)) {
        Y(t, s) = site_mean[s] + anomaly;
        missing.emplace_back(t, s);
      }
    }
  }

  const int rank = m - 1;
  constexpr int kMaxIter = 500;
  constexpr double kTol = 1e-6;
  MatrixXd U;
  MatrixXd centered;
  for (int it = 0;; ++it) {
    const Eigen::RowVectorXd mean = Y.colwise().mean();
    centered = Y.rowwise() - mean;
    Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U = svd.matrixU().leftCols(rank);
    if (missing.empty()) break;
    const MatrixXd recon =
        (U * svd.singularValues().head(rank).asDiagonal() *
         svd.matrixV().leftCols(rank).transpose()).rowwise() + mean;
    double change2 = 0.0;
    for (auto [t, s] : missing) {
      const double d = recon(t, s) - Y(t, s);
      change2 += d * d;
      Y(t, s) = recon(t, s);
    }
    const double change = std::sqrt(change2);
    if (!diag.change_norms.empty() &&
        change > diag.change_norms.back() * (1.0 + 1e-9) + 1e-14) {
      diag.monotone = false;
    }
    diag.change_norms.push_back(change);
    diag.iterations = it + 1;
    const double scale = std::max(centered.norm(), 1e-300);
    if (change / scale < kTol) break;
    if (it + 1 >= kMaxIter) {
      std::ostringstream msg;
      msg << "estimate_temporal_basis: completion did not converge in " << kMaxIter
          << " iterations; last relative changes:";
      const auto k0 = diag.change_norms.size() > 5 ? diag.change_norms.size() - 5 : 0;
      for (auto k = k0; k < diag.change_norms.size(); ++k) {
        msg << ' ' << diag.change_norms[k] / scale;
      }
      throw NumericalError(msg.str());
    }
  }

  const MatrixXd smoother = smoothing_spline_matrix(T, smooth_df);
  basis.values.rightCols(rank) = smoother * U;
  finish_basis(basis.values);
  for (int j = 1; j < m; ++j) {
    if (basis.values.col(j).dot(centered.col(0)) < 0.0) basis.values.col(j) *= -1.0;
  }
  diag.sites_used = std::move(used);
  if (diagnostics) *diagnostics = std::move(diag);
  return basis;
}

StackedObservations stack_observations(const ObservationSet& obs,
                                       const std::vector<std::string>& site_ids,
                                       int num_periods) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < site_ids.size(); ++i) index[site_ids[i]] = static_cast<int>(i);

  struct Row {
    int period;
    int site;
    double value;
  };
  std::vector<Row> rows;
  rows.reserve(obs.size());
  for (const auto& r : obs) {
    auto it = index.find(r.site_id);
    if (it == index.end()) throw InputError("observation for unknown site '" + r.site_id + "'");
    if (r.period >= num_periods) {
      throw InputError("observation period " + std::to_string(r.period) +
                       " lies outside the temporal basis grid of " +
                       std::to_string(num_periods) + " periods");
    }
    rows.push_back({r.period, it->second, r.value});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.period < b.period || (a.period == b.period && a.site < b.site);
  });

  StackedObservations out;
  out.site_ids = site_ids;
  out.num_periods = num_periods;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.period_begin.assign(num_periods + 1, 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row_site.push_back(rows[k].site);
    out.row_period.push_back(rows[k].period);
    out.y[static_cast<Eigen::Index>(k)] = rows[k].value;
    ++out.period_begin[rows[k].period + 1];
  }
  for (int t = 0; t < num_periods; ++t) out.period_begin[t + 1] += out.period_begin[t];
  return out;
}

Eigen::SparseMatrix<double> build_F(const StackedObservations& stacked,
                                    const TemporalBasis& basis) {
  const int n = stacked.num_sites();
  const int m = basis.m();
  const auto N = static_cast<Eigen::Index>(stacked.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(N) * m);
  for (Eigen::Index r = 0; r < N; ++r) {
    const int t = stacked.row_period[r];
    if (t >= basis.num_periods()) {
      throw InputError("build_F: period " + std::to_string(t) + " outside the basis grid");
    }
    for (int i = 0; i < m; ++i) {
      trips.emplace_back(r, i * n + stacked.row_site[r], basis(t, i));
    }
  }
  Eigen::SparseMatrix<double> F(N, static_cast<Eigen::Index>(m) * n);
  // Explicit zeros are kept so the pattern always has m entries per row.
  F.setFromTriplets(trips.begin(), trips.end());
  return F;
}

SiteTrendFit site_trend_fit(const ObservationSet& obs, const std::string& site_id,
                            const TemporalBasis& basis) {
  SiteTrendFit fit;
  std::vector<double> vals;
  for (const auto& r : obs) {
    if (r.site_id != site_id) continue;
    if (r.period >= basis.num_periods()) {
      throw InputError("site_trend_fit: period outside the basis grid");
    }
    fit.periods.push_back(r.period);
    vals.push_back(r.value);
  }
  const auto k = static_cast<Eigen::Index>(vals.size());
  if (k < basis.m()) {
    throw InputError("site_trend_fit: site '" + site_id + "' has fewer observations than basis functions");
  }
  MatrixXd design(k, basis.m());
  fit.observed.resize(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    design.row(r) = basis.values.row(fit.periods[r]);
    fit.observed[r] = vals[r];
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < basis.m()) {
    throw NumericalError("site_trend_fit: rank-deficient design at site '" + site_id + "'");
  }
  fit.coefficients = qr.solve(fit.observed);
  fit.fitted = design * fit.coefficients;
  return fit;
}

TemporalBasis seasonal_basis(int num_periods, int m, int anchor_day) {
  if (num_periods < m) throw InputError("seasonal_basis: fewer periods than functions");
  TemporalBasis b;
  b.anchor_day = anchor_day;
  b.values = MatrixXd::Ones(num_periods, m);
  for (int j = 1; j < m; ++j) {
    const int harmonic = (j + 1) / 2;
    for (int t = 0; t < num_periods; ++t) {
      const double arg = 2.0 * std::numbers::pi * harmonic * t / 26.0;
      b.values(t, j) = (j % 2 == 1) ? std::cos(arg) : std::sin(arg);
    }
  }
  finish_basis(b.values);
  return b;
}

}  // namespace rrst
