#include "rrst/covariance.hpp"

#include <cmath>
#include <sstream>

namespace rrst {

void ExpCovParams::validate(const std::string& what) const {
  if (!(range > 0.0) || !std::isfinite(range)) {
    throw InputError(what + ": range must be positive and finite");
  }
  if (!(partial_sill >= 0.0) || !std::isfinite(partial_sill)) {
    throw InputError(what + ": partial sill must be non-negative");
  }
  if (!(nugget >= 0.0) || !std::isfinite(nugget)) {
    throw InputError(what + ": nugget must be non-negative");
  }
}

void CovParams::validate(bool beta_ranges_used) const {
  if (theta_B.empty()) throw InputError("CovParams: theta_B is empty");
  for (std::size_t j = 0; j < theta_B.size(); ++j) {
    const auto& b = theta_B[j];
    const std::string what = "theta_B[" + std::to_string(j) + "]";
    if (beta_ranges_used) b.validate(what);
    if (!(b.partial_sill >= 0.0) || !std::isfinite(b.partial_sill)) {
      throw InputError(what + ": partial sill must be non-negative");
    }
    if (b.nugget != 0.0) throw InputError(what + ": beta-field nugget belongs in theta_P");
  }
  if (theta_P) {
    if (theta_P->size() != theta_B.size()) {
      throw InputError("CovParams: theta_P length differs from theta_B");
    }
    for (double s : *theta_P) {
      if (!(s >= 0.0) || !std::isfinite(s)) {
        throw InputError("CovParams: theta_P entries must be non-negative");
      }
    }
  }
  theta_V.validate("theta_V");
}

double exp_corr(double r, double range) {
  if (r < 0.0) throw InputError("exp_corr: negative distance");
  if (!(range > 0.0)) throw InputError("exp_corr: range must be positive");
  return std::exp(-r / range);
}

MatrixXd exp_corr(const MatrixXd& dists, double range) {
  if (!(range > 0.0)) throw InputError("exp_corr: range must be positive");
  return (-dists.array() / range).exp().matrix();
}

MatrixXd cov_matrix(const MatrixXd& dists, const ExpCovParams& params) {
  if (dists.rows() != dists.cols()) throw InputError("cov_matrix: distance matrix is not square");
  params.validate("cov_matrix");
  MatrixXd c = params.partial_sill * exp_corr(dists, params.range);
  c.diagonal().array() += params.nugget;
  return c;
}

double Cholesky::logdet() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Cholesky robust_cholesky(MatrixXd a, double jitter_scale, const std::string& what) {
  Cholesky out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;
  const double jitter = 1e-10 * (jitter_scale > 0.0 ? jitter_scale : 1.0);
  a.diagonal().array() += jitter;
  out.llt.compute(a);
  out.jittered = true;
  if (out.llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "Cholesky failed for " << what << " after diagonal jitter " << jitter;
    throw NumericalError(msg.str());
  }
  return out;
}

}  // namespace rrst
