#pragma once

#include "rrst/covariance.hpp"
#include "rrst/layout.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rrst {

/// NUGGET and NO_NUGGET are the reduced-rank routes with and without the
/// beta-field site nuggets; DENSE is the full-rank route whose beta-field
/// covariance is handled as m dense n x n blocks.
enum class LikelihoodPath { NUGGET, NO_NUGGET, DENSE };

std::string to_string(LikelihoodPath path);

struct SolveDiagnostics {
  std::vector<int> jittered_periods;
  std::vector<int> jittered_fields;
};

/// Factorization of the observation covariance
///
///   Sigma~ = F Z_B S_B Z_B^T F^T + F S_P F^T + Sigma_V
///
/// that never forms the N x N matrix. Sigma_V is factored per period. The
/// site-level term is absorbed first,
///
///   R = Sigma_V + F G0 G0^T F^T,   |R| = |Sigma_V| |I + G0^T Q G0|,
///   Q = F^T Sigma_V^{-1} F,
///
/// with G0 = S_P^{1/2} (reduced-rank models with nugget) or the block
/// Cholesky factor of tau_j^2 Omega_j + sigma_j^2 I (full-rank model). The
/// penalized basis follows with G1 = Z_B S_B^{1/2},
///
///   |Sigma~| = |R| |I + G1^T F^T R^{-1} F G1|,
///
/// and Sigma~^{-1} comes from applying the Woodbury identity at each stage.
/// The scaled forms I + G^T A G equal the |S| |S^{-1} + A| factors of the
/// textbook identities and stay finite when a variance is zero.
class SigmaFactor {
 public:
  SigmaFactor(const ModelLayout& layout, const CovParams& params);

  double logdet() const { return logdet_; }
  /// Sigma~^{-1} rhs for an N x k right-hand side.
  MatrixXd solve(const MatrixXd& rhs) const;

  LikelihoodPath path() const { return path_; }
  const SolveDiagnostics& diagnostics() const { return diagnostics_; }
  /// Unscaled penalized blocks Z_j, one per field (empty for NONE / full rank).
  const std::vector<MatrixXd>& penalized() const { return Z_; }

  /// F c for a (m n) x k coefficient matrix.
  MatrixXd apply_F(const MatrixXd& coef) const;
  /// F^T u for an N x k matrix.
  MatrixXd apply_Ft(const MatrixXd& rows) const;

 private:
  MatrixXd solve_V(const MatrixXd& rhs) const;
  MatrixXd solve_R(const MatrixXd& rhs) const;
  MatrixXd apply_G0(const MatrixXd& x) const;
  MatrixXd apply_G0t(const MatrixXd& x) const;

  const ModelLayout* layout_;
  LikelihoodPath path_;
  SolveDiagnostics diagnostics_;
  std::vector<Cholesky> period_chol_;

  bool stage1_ = false;
  VectorXd g0_diag_;               // nugget route
  std::vector<MatrixXd> g0_blocks_;  // full-rank route, lower triangular
  Eigen::LLT<MatrixXd> m1_;

  bool stage2_ = false;
  std::vector<MatrixXd> Z_;
  MatrixXd W_;  // R^{-1} F G1
  Eigen::LLT<MatrixXd> m2_;

  double logdet_ = 0.0;
};

struct LogLikResult {
  double value = 0.0;
  VectorXd alpha_hat;
  MatrixXd alpha_cov;  // (X^T F^T Sigma~^{-1} F X)^{-1}
  double logdet = 0.0;
  double quad = 0.0;
  LikelihoodPath path = LikelihoodPath::NUGGET;
  SolveDiagnostics diagnostics;
};

/// -1/2 [log|Sigma~| + r^T Sigma~^{-1} r + N log 2 pi] with r = y - F X alpha_hat.
LogLikResult profile_loglik(const CovParams& params, const ModelLayout& layout, const VectorXd& y);
LogLikResult profile_loglik(const CovParams& params, const ModelLayout& layout);

/// Generalized least squares estimate of alpha.
VectorXd gls_alpha(const CovParams& params, const ModelLayout& layout, const VectorXd& y);

/// Gaussian log-likelihood at a given alpha (not profiled).
double full_loglik(const CovParams& params, const ModelLayout& layout, const VectorXd& y,
                   const VectorXd& alpha);

std::string describe(const CovParams& params);

/// Free covariance parameters on the log scale with their box bounds.
///
/// Order: per field log range (range-estimated bases only) and log partial
/// sill (when the field has a spatial component); per field log nugget (when
/// included); then log range, log partial sill and log nugget of the
/// residual field. Ranges are bounded by [1e-3, 10] times the maximum site
/// distance, variances by [1e-8, 100 var(y)].
struct ParamSpace {
  std::vector<std::string> names;
  VectorXd lower;
  VectorXd upper;
  CovParams base;  // supplies fixed values and shapes
  bool free_beta_range = false;
  bool free_beta_sill = false;
  bool free_beta_nugget = false;

  Eigen::Index size() const { return lower.size(); }
  CovParams unpack(const VectorXd& x) const;
  VectorXd pack(const CovParams& params) const;
  VectorXd clamp(const VectorXd& x) const;
};

ParamSpace make_param_space(const ModelLayout& layout);

struct GradientResult {
  VectorXd gradient;
  std::vector<bool> one_sided;

  bool any_one_sided() const;
};

/// Central differences with step rel_step * max(1, |x_i|); one-sided at box
/// bounds, flagged per coordinate.
GradientResult numeric_gradient(const std::function<double(const VectorXd&)>& f,
                                const VectorXd& x, const VectorXd& lower,
                                const VectorXd& upper, double rel_step = 1e-5);

/// Gradient of the profile log-likelihood with respect to the log-scale
/// parameters of make_param_space(layout).
GradientResult loglik_gradient(const CovParams& params, const ModelLayout& layout,
                               const VectorXd& y);

}  // namespace rrst
