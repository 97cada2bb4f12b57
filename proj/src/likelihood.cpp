#include "rrst/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

namespace rrst {

std::string to_string(LikelihoodPath path) {
  switch (path) {
    case LikelihoodPath::NUGGET: return "nugget";
    case LikelihoodPath::NO_NUGGET: return "no_nugget";
    case LikelihoodPath::DENSE: return "dense";
  }
  return "?";
}

namespace {

Eigen::LLT<MatrixXd> factor_spd(MatrixXd a, const std::string& what) {
  a = 0.5 * (a + a.transpose());
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky failed for " + what);
  return llt;
}

double llt_logdet(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

SigmaFactor::SigmaFactor(const ModelLayout& layout, const CovParams& params) : layout_(&layout) {
  if (static_cast<int>(params.m()) != layout.m()) {
    throw InputError("covariance parameters have " + std::to_string(params.m()) +
                     " fields, model has " + std::to_string(layout.m()));
  }
  params.validate(layout.beta_ranges_used());
  const auto& st = layout.stacked;
  const int m = layout.m();
  const int n = layout.n();
  const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;

  if (layout.kind == BasisKind::FULL) {
    path_ = LikelihoodPath::DENSE;
  } else {
    path_ = params.has_beta_nugget() ? LikelihoodPath::NUGGET : LikelihoodPath::NO_NUGGET;
  }

  // Residual field, one block per period.
  const auto& V = params.theta_V;
  period_chol_.resize(st.num_periods);
  for (int t = 0; t < st.num_periods; ++t) {
    const int b = st.period_begin[t];
    const int e = st.period_begin[t + 1];
    if (e == b) continue;
    MatrixXd S(e - b, e - b);
    for (int a = 0; a < e - b; ++a) {
      for (int c = 0; c <= a; ++c) {
        const double d = layout.site_dist(st.row_site[b + a], st.row_site[b + c]);
        S(a, c) = S(c, a) = V.partial_sill * std::exp(-d / V.range);
      }
      S(a, a) += V.nugget;
    }
    period_chol_[t] = robust_cholesky(std::move(S), V.partial_sill + V.nugget,
                                      "residual covariance of period " + std::to_string(t));
    if (period_chol_[t].jittered) diagnostics_.jittered_periods.push_back(t);
    logdet_ += period_chol_[t].logdet();
  }

  // Site-level stage.
  if (path_ == LikelihoodPath::DENSE) {
    stage1_ = true;
    for (int j = 0; j < m; ++j) {
      const double tau2 = params.theta_B[j].partial_sill;
      const double sig2 = params.has_beta_nugget() ? (*params.theta_P)[j] : 0.0;
      MatrixXd C = tau2 * exp_corr(layout.site_dist, layout.field_range(j, params));
      C.diagonal().array() += sig2;
      Cholesky ch = robust_cholesky(std::move(C), tau2 + sig2,
                                    "beta-field covariance of field " + std::to_string(j + 1));
      if (ch.jittered) diagnostics_.jittered_fields.push_back(j);
      g0_blocks_.push_back(ch.llt.matrixL());
    }
  } else if (params.has_beta_nugget()) {
    stage1_ = true;
    g0_diag_.resize(mn);
    for (int j = 0; j < m; ++j) {
      g0_diag_.segment(static_cast<Eigen::Index>(j) * n, n).setConstant(std::sqrt((*params.theta_P)[j]));
    }
  }

  if (stage1_) {
    MatrixXd Q = MatrixXd::Zero(mn, mn);
    for (int t = 0; t < st.num_periods; ++t) {
      const int b = st.period_begin[t];
      const int nt = st.period_begin[t + 1] - b;
      if (nt == 0) continue;
      const MatrixXd inv = period_chol_[t].llt.solve(MatrixXd::Identity(nt, nt));
      for (int i = 0; i < m; ++i) {
        for (int i2 = 0; i2 < m; ++i2) {
          const double w = layout.trends(t, i) * layout.trends(t, i2);
          if (w == 0.0) continue;
          for (int a = 0; a < nt; ++a) {
            const Eigen::Index ra = static_cast<Eigen::Index>(i) * n + st.row_site[b + a];
            for (int c = 0; c < nt; ++c) {
              Q(ra, static_cast<Eigen::Index>(i2) * n + st.row_site[b + c]) += w * inv(a, c);
            }
          }
        }
      }
    }
    const MatrixXd GtQ = apply_G0t(Q);
    MatrixXd M1 = apply_G0t(GtQ.transpose()).transpose();
    M1.diagonal().array() += 1.0;
    m1_ = factor_spd(std::move(M1), "site-level capacitance matrix");
    logdet_ += llt_logdet(m1_);
  }

  // Penalized basis stage.
  if (layout.has_penalized() && layout.penalized_rank() > 0) {
    stage2_ = true;
    const Eigen::Index K = layout.penalized_rank();
    for (int j = 0; j < m; ++j) Z_.push_back(layout.penalized_for(j, params));
    MatrixXd FG1 = MatrixXd::Zero(layout.N(), m * K);
    for (Eigen::Index r = 0; r < layout.N(); ++r) {
      const int s = st.row_site[r];
      const int t = st.row_period[r];
      for (int j = 0; j < m; ++j) {
        const double scale = layout.trends(t, j) * std::sqrt(params.theta_B[j].partial_sill);
        FG1.row(r).segment(j * K, K) = scale * Z_[j].row(s);
      }
    }
    W_ = solve_R(FG1);
    MatrixXd M2 = FG1.transpose() * W_;
    M2.diagonal().array() += 1.0;
    m2_ = factor_spd(std::move(M2), "basis capacitance matrix");
    logdet_ += llt_logdet(m2_);
  }
}

MatrixXd SigmaFactor::apply_F(const MatrixXd& coef) const {
  const auto& st = layout_->stacked;
  const int m = layout_->m();
  const int n = layout_->n();
  MatrixXd out = MatrixXd::Zero(layout_->N(), coef.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const int s = st.row_site[r];
    const int t = st.row_period[r];
    for (int j = 0; j < m; ++j) out.row(r) += layout_->trends(t, j) * coef.row(j * n + s);
  }
  return out;
}

MatrixXd SigmaFactor::apply_Ft(const MatrixXd& rows) const {
  const auto& st = layout_->stacked;
  const int m = layout_->m();
  const int n = layout_->n();
  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(m) * n, rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const int s = st.row_site[r];
    const int t = st.row_period[r];
    for (int j = 0; j < m; ++j) out.row(j * n + s) += layout_->trends(t, j) * rows.row(r);
  }
  return out;
}

MatrixXd SigmaFactor::apply_G0(const MatrixXd& x) const {
  if (path_ != LikelihoodPath::DENSE) return g0_diag_.asDiagonal() * x;
  const int n = layout_->n();
  MatrixXd out(x.rows(), x.cols());
  for (std::size_t j = 0; j < g0_blocks_.size(); ++j) {
    const Eigen::Index o = static_cast<Eigen::Index>(j) * n;
    out.middleRows(o, n) = g0_blocks_[j].triangularView<Eigen::Lower>() * x.middleRows(o, n);
  }
  return out;
}

MatrixXd SigmaFactor::apply_G0t(const MatrixXd& x) const {
  if (path_ != LikelihoodPath::DENSE) return g0_diag_.asDiagonal() * x;
  const int n = layout_->n();
  MatrixXd out(x.rows(), x.cols());
  for (std::size_t j = 0; j < g0_blocks_.size(); ++j) {
    const Eigen::Index o = static_cast<Eigen::Index>(j) * n;
    out.middleRows(o, n) =
        g0_blocks_[j].triangularView<Eigen::Lower>().transpose() * x.middleRows(o, n);
  }
  return out;
}

MatrixXd SigmaFactor::solve_V(const MatrixXd& rhs) const {
  const auto& st = layout_->stacked;
  MatrixXd out(rhs.rows(), rhs.cols());
  for (int t = 0; t < st.num_periods; ++t) {
    const int b = st.period_begin[t];
    const int nt = st.period_begin[t + 1] - b;
    if (nt == 0) continue;
    out.middleRows(b, nt) = period_chol_[t].llt.solve(rhs.middleRows(b, nt));
  }
  return out;
}

MatrixXd SigmaFactor::solve_R(const MatrixXd& rhs) const {
  MatrixXd v = solve_V(rhs);
  if (!stage1_) return v;
  const MatrixXd s = m1_.solve(apply_G0t(apply_Ft(v)));
  return v - solve_V(apply_F(apply_G0(s)));
}

MatrixXd SigmaFactor::solve(const MatrixXd& rhs) const {
  if (rhs.rows() != layout_->N()) {
    throw InputError("SigmaFactor::solve: right-hand side has " + std::to_string(rhs.rows()) +
                     " rows, expected " + std::to_string(layout_->N()));
  }
  MatrixXd out = solve_R(rhs);
  if (stage2_) out -= W_ * m2_.solve(W_.transpose() * rhs);
  return out;
}

std::string describe(const CovParams& params) {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t j = 0; j < params.theta_B.size(); ++j) {
    os << "B" << j + 1 << "(range=" << params.theta_B[j].range
       << ", sill=" << params.theta_B[j].partial_sill << ") ";
  }
  if (params.theta_P) {
    os << "P(";
    for (std::size_t j = 0; j < params.theta_P->size(); ++j) {
      os << (j ? ", " : "") << (*params.theta_P)[j];
    }
    os << ") ";
  }
  os << "V(range=" << params.theta_V.range << ", sill=" << params.theta_V.partial_sill
     << ", nugget=" << params.theta_V.nugget << ")";
  return os.str();
}

LogLikResult profile_loglik(const CovParams& params, const ModelLayout& layout, const VectorXd& y) {
  if (y.size() != layout.N()) {
    throw InputError("profile_loglik: y has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(layout.N()));
  }
  if (!layout.dependent_columns.empty()) {
    std::string cols;
    for (const auto& c : layout.dependent_columns) cols += (cols.empty() ? "" : ", ") + c;
    throw InputError("design matrix is rank deficient; dependent columns: " + cols);
  }
  SigmaFactor fac(layout, params);
  const Eigen::Index P = layout.P();
  MatrixXd D(layout.N(), P + 1);
  D.leftCols(P) = layout.FX;
  D.col(P) = y;
  const MatrixXd B = D.transpose() * fac.solve(D);

  LogLikResult out;
  out.path = fac.path();
  out.diagnostics = fac.diagnostics();
  out.logdet = fac.logdet();
  const MatrixXd Bxx = 0.5 * (B.topLeftCorner(P, P) + B.topLeftCorner(P, P).transpose());
  Eigen::LLT<MatrixXd> bxx(Bxx);
  if (bxx.info() != Eigen::Success) {
    throw NumericalError("GLS normal equations are not positive definite at " + describe(params));
  }
  out.alpha_hat = bxx.solve(B.col(P).head(P));
  out.alpha_cov = bxx.solve(MatrixXd::Identity(P, P));
  out.quad = B(P, P) - B.col(P).head(P).dot(out.alpha_hat);
  const double N = static_cast<double>(layout.N());
  out.value = -0.5 * (out.logdet + out.quad + N * std::log(2.0 * std::numbers::pi));
  if (!std::isfinite(out.value)) {
    throw NumericalError("non-finite log-likelihood at " + describe(params));
  }
  return out;
}

LogLikResult profile_loglik(const CovParams& params, const ModelLayout& layout) {
  return profile_loglik(params, layout, layout.stacked.y);
}

VectorXd gls_alpha(const CovParams& params, const ModelLayout& layout, const VectorXd& y) {
  return profile_loglik(params, layout, y).alpha_hat;
}

double full_loglik(const CovParams& params, const ModelLayout& layout, const VectorXd& y,
                   const VectorXd& alpha) {
  if (alpha.size() != layout.P()) throw InputError("full_loglik: alpha has the wrong length");
  SigmaFactor fac(layout, params);
  const VectorXd r = y - layout.FX * alpha;
  const double quad = r.dot(fac.solve(r).col(0));
  const double N = static_cast<double>(layout.N());
  return -0.5 * (fac.logdet() + quad + N * std::log(2.0 * std::numbers::pi));
}

// ---------------------------------------------------------------------------

namespace {

template <class Visit>
void visit_slots(CovParams& p, const ParamSpace& space, Visit&& visit) {
  const std::size_t m = p.theta_B.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (space.free_beta_range) visit(p.theta_B[j].range);
    if (space.free_beta_sill) visit(p.theta_B[j].partial_sill);
  }
  if (space.free_beta_nugget) {
    for (double& s : *p.theta_P) visit(s);
  }
  visit(p.theta_V.range);
  visit(p.theta_V.partial_sill);
  visit(p.theta_V.nugget);
}

}  // namespace

CovParams ParamSpace::unpack(const VectorXd& x) const {
  if (x.size() != size()) throw InputError("ParamSpace::unpack: wrong vector length");
  CovParams p = base;
  Eigen::Index k = 0;
  visit_slots(p, *this, [&](double& v) { v = std::exp(x[k++]); });
  return p;
}

VectorXd ParamSpace::pack(const CovParams& params) const {
  CovParams p = params;
  if (p.theta_B.size() != base.theta_B.size() || p.has_beta_nugget() != base.has_beta_nugget()) {
    throw InputError("ParamSpace::pack: parameter shape does not match the model");
  }
  VectorXd x(size());
  Eigen::Index k = 0;
  visit_slots(p, *this, [&](double& v) {
    if (!(v > 0.0)) {
      throw InputError("ParamSpace::pack: parameter '" + names[k] + "' must be positive");
    }
    x[k++] = std::log(v);
  });
  return x;
}

VectorXd ParamSpace::clamp(const VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

ParamSpace make_param_space(const ModelLayout& layout) {
  ParamSpace s;
  const int m = layout.m();
  const double dmax = layout.max_dist > 0.0 ? layout.max_dist : 1.0;
  const double vmax = 100.0 * (layout.y_variance > 0.0 ? layout.y_variance : 1.0);
  const double lo_range = std::log(1e-3 * dmax), hi_range = std::log(10.0 * dmax);
  const double lo_var = std::log(1e-8), hi_var = std::log(vmax);

  s.free_beta_range = layout.beta_ranges_used() && !layout.range_mode.is_fixed();
  s.free_beta_sill = layout.kind != BasisKind::NONE;
  s.free_beta_nugget = layout.include_beta_nugget;

  const double range0 = layout.range_mode.is_fixed() ? layout.fixed_range : dmax / 4.0;
  s.base.theta_B.assign(m, ExpCovParams{range0, s.free_beta_sill ? 1.0 : 0.0, 0.0});
  if (s.free_beta_nugget) s.base.theta_P = std::vector<double>(m, 1.0);
  s.base.theta_V = ExpCovParams{dmax / 4.0, 1.0, 1.0};

  std::vector<double> lo, hi;
  auto add = [&](const std::string& name, bool range) {
    s.names.push_back(name);
    lo.push_back(range ? lo_range : lo_var);
    hi.push_back(range ? hi_range : hi_var);
  };
  for (int j = 0; j < m; ++j) {
    const std::string f = std::to_string(j + 1);
    if (s.free_beta_range) add("log_range_B" + f, true);
    if (s.free_beta_sill) add("log_sill_B" + f, false);
  }
  if (s.free_beta_nugget) {
    for (int j = 0; j < m; ++j) add("log_nugget_P" + std::to_string(j + 1), false);
  }
  add("log_range_V", true);
  add("log_sill_V", false);
  add("log_nugget_V", false);
  s.lower = Eigen::Map<VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  s.upper = Eigen::Map<VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return s;
}

bool GradientResult::any_one_sided() const {
  for (bool b : one_sided) {
    if (b) return true;
  }
  return false;
}

GradientResult numeric_gradient(const std::function<double(const VectorXd&)>& f,
                                const VectorXd& x, const VectorXd& lower,
                                const VectorXd& upper, double rel_step) {
  GradientResult g;
  g.gradient.resize(x.size());
  g.one_sided.assign(static_cast<std::size_t>(x.size()), false);
  std::optional<double> f0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    VectorXd xp = x, xm = x;
    const bool up_ok = x[i] + h <= upper[i];
    const bool down_ok = x[i] - h >= lower[i];
    if (up_ok && down_ok) {
      xp[i] += h;
      xm[i] -= h;
      g.gradient[i] = (f(xp) - f(xm)) / (2.0 * h);
      continue;
    }
    g.one_sided[static_cast<std::size_t>(i)] = true;
    if (!f0) f0 = f(x);
    if (up_ok) {
      xp[i] += h;
      g.gradient[i] = (f(xp) - *f0) / h;
    } else {
      xm[i] -= h;
      g.gradient[i] = (*f0 - f(xm)) / h;
    }
  }
  return g;
}

GradientResult loglik_gradient(const CovParams& params, const ModelLayout& layout,
                               const VectorXd& y) {
  const ParamSpace space = make_param_space(layout);
  auto f = [&](const VectorXd& x) { return profile_loglik(space.unpack(x), layout, y).value; };
  return numeric_gradient(f, space.pack(params), space.lower, space.upper);
}

}  // namespace rrst
