#include "rrst/fit.hpp"

#include "rrst/rng.hpp"

#include <cmath>
#include <optional>

namespace rrst {

CovParams initialize_params(const ModelLayout& layout) {
  const ParamSpace space = make_param_space(layout);
  const MatrixXd& X = layout.FX;
  const VectorXd& y = layout.stacked.y;
  const VectorXd beta = X.colPivHouseholderQr().solve(y);
  const double resid_var = (y - X * beta).squaredNorm() / static_cast<double>(y.size());
  if (!(resid_var > 1e-12 * std::max(1.0, y.squaredNorm() / static_cast<double>(y.size())))) {
    throw InputError("initialize_params: residual variance after OLS is zero (degenerate data)");
  }

  int active = 2;  // residual sill and nugget
  if (space.free_beta_sill) active += layout.m();
  if (space.free_beta_nugget) active += layout.m();
  const double share = resid_var / active;
  const double range0 = layout.max_dist / 4.0;

  CovParams p = space.base;
  for (auto& b : p.theta_B) {
    if (!layout.range_mode.is_fixed()) b.range = range0;
    if (space.free_beta_sill) b.partial_sill = share;
  }
  if (p.theta_P) p.theta_P->assign(p.theta_P->size(), share);
  p.theta_V = ExpCovParams{range0, share, share};
  return space.unpack(space.clamp(space.pack(p)));
}

CovParams initialize_params(const ModelSpec& spec, const SiteTable& sites,
                            const ObservationSet& obs) {
  const TemporalBasis trends = estimate_temporal_basis(obs, spec.m, spec.smooth_df);
  return initialize_params(build_layout(spec, sites, obs, trends));
}

FittedModel fit_layout(const ModelSpec& spec, std::shared_ptr<const ModelLayout> layout_ptr) {
  const ModelLayout& layout = *layout_ptr;
  if (!layout.dependent_columns.empty()) {
    std::string cols;
    for (const auto& c : layout.dependent_columns) cols += (cols.empty() ? "" : ", ") + c;
    throw InputError("design matrix is rank deficient; dependent columns: " + cols);
  }
  const ParamSpace space = make_param_space(layout);
  const VectorXd& y = layout.stacked.y;
  auto objective = [&](const VectorXd& x) { return -profile_loglik(space.unpack(x), layout, y).value; };
  auto gradient = [&](const VectorXd& x) {
    return numeric_gradient(objective, x, space.lower, space.upper);
  };

  const VectorXd x0 = space.pack(initialize_params(layout));
  const double initial_ll = -objective(x0);

  std::optional<OptimResult> best;
  int best_start = 0;
  std::optional<OptimizationError> first_error;
  for (int s = 0; s < spec.optimizer.multistart; ++s) {
    VectorXd start = x0;
    if (s > 0) {
      Rng rng = Rng::derived(spec.optimizer.seed, static_cast<std::uint64_t>(s));
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += 0.5 * rng.normal();
      start = space.clamp(start);
    }
    try {
      OptimResult r = minimize_box(objective, gradient, start, space.lower, space.upper,
                                   spec.optimizer);
      if (!best || r.value < best->value) {
        best = std::move(r);
        best_start = s;
      }
    } catch (const OptimizationError& e) {
      if (!first_error) first_error = e;
    }
  }
  if (!best) throw *first_error;

  FittedModel fm;
  fm.spec = spec;
  fm.trends = layout.trends;
  fm.site_ids = layout.stacked.site_ids;
  fm.site_coords = layout.coords;
  fm.knots = layout.knots;
  fm.max_dist = layout.max_dist;
  fm.fixed_range = layout.fixed_range;
  if (layout.tprs) {
    fm.tprs_center = layout.tprs->center();
    fm.tprs_scale = layout.tprs->scale();
  }
  fm.xi = space.unpack(best->x);
  fm.param_names = space.names;
  fm.log_params = best->x;
  const LogLikResult ll = profile_loglik(fm.xi, layout, y);
  fm.alpha = ll.alpha_hat;
  fm.alpha_cov = ll.alpha_cov;
  fm.alpha_names = layout.alpha_names;
  fm.loglik = ll.value;
  fm.initial_loglik = initial_ll;
  fm.aic = 2.0 * static_cast<double>(space.size() + layout.P()) - 2.0 * ll.value;
  fm.path = ll.path;
  fm.optimizer_message = best->message;
  fm.iterations = best->iterations;
  fm.best_start = best_start;
  fm.trace = best->trace;
  fm.layout = layout_ptr;

  fm.warnings = layout.basis_diagnostics;
  if (!spec.include_beta_nugget && layout.has_penalized() && spec.basis.K < 10) {
    fm.warnings.push_back("model without beta-field nugget at rank K = " +
                          std::to_string(spec.basis.K) + " < 10 may be unstable");
  }
  if (best->gradient_one_sided) {
    fm.warnings.push_back("estimate lies on a box bound of at least one parameter");
  }
  for (int t : ll.diagnostics.jittered_periods) {
    fm.warnings.push_back("residual covariance of period " + std::to_string(t) + " was jittered");
  }
  for (int j : ll.diagnostics.jittered_fields) {
    fm.warnings.push_back("beta-field covariance " + std::to_string(j + 1) + " was jittered");
  }
  return fm;
}

FittedModel fit(const ModelSpec& spec, const SiteTable& sites, const ObservationSet& obs,
                const TemporalBasis* trends) {
  spec.validate();
  if (obs.empty()) throw InputError("fit: no observations");
  const TemporalBasis tb = trends ? *trends : estimate_temporal_basis(obs, spec.m, spec.smooth_df);
  auto layout = std::make_shared<const ModelLayout>(build_layout(spec, sites, obs, tb));
  FittedModel fm = fit_layout(spec, layout);
  fm.obs_fingerprint = fingerprint(obs);
  fm.site_fingerprint = fingerprint(sites);
  return fm;
}

ModelLayout rebuild_layout(const FittedModel& model, const SiteTable& sites,
                           const ObservationSet& obs) {
  ModelSpec spec = model.spec;
  if (spec.basis.kind == BasisKind::LRK) spec.basis.knots = model.knots;
  return build_layout(spec, sites, obs, model.trends);
}

}  // namespace rrst
