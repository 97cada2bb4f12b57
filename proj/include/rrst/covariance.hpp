#pragma once

#include "rrst/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rrst {

/// Exponential covariance: partial_sill * exp(-r / range) + nugget * 1{r = 0}.
struct ExpCovParams {
  double range = 1.0;         // km
  double partial_sill = 0.0;  // tau^2
  double nugget = 0.0;        // sigma^2

  void validate(const std::string& what) const;
};

/// Covariance parameters of the full model.
///
/// theta_B holds one (range, partial sill) pair per temporal basis function;
/// its nugget entries are always zero. For range-free spatial bases (TPRS,
/// none) the range entries are ignored. theta_P holds the per-field site
/// nuggets and is absent for models without them.
struct CovParams {
  std::vector<ExpCovParams> theta_B;
  std::optional<std::vector<double>> theta_P;
  ExpCovParams theta_V;

  std::size_t m() const { return theta_B.size(); }
  bool has_beta_nugget() const { return theta_P.has_value(); }

  /// Throws InputError when an invariant fails; ranges of theta_B are only
  /// checked when beta_ranges_used.
  void validate(bool beta_ranges_used) const;
};

/// exp(-r / range).
double exp_corr(double r, double range);

/// Applies exp_corr elementwise.
MatrixXd exp_corr(const MatrixXd& dists, double range);

/// tau^2 exp(-d_ij / range) + sigma^2 1{i = j} for a square distance matrix.
MatrixXd cov_matrix(const MatrixXd& dists, const ExpCovParams& params);

/// Cholesky factor of a symmetric matrix with one retry.
///
/// When the first factorization fails, jitter_scale * 1e-10 is added to the
/// diagonal and the factorization is retried once. A second failure throws
/// NumericalError mentioning `what`.
struct Cholesky {
  Eigen::LLT<MatrixXd> llt;
  bool jittered = false;

  double logdet() const;
};

Cholesky robust_cholesky(MatrixXd a, double jitter_scale, const std::string& what);

}  // namespace rrst
