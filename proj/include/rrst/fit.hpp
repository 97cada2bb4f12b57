#pragma once

#include "rrst/layout.hpp"
#include "rrst/likelihood.hpp"
#include "rrst/optimizer.hpp"

#include <memory>
#include <string>
#include <vector>

namespace rrst {

struct FittedModel {
  static constexpr int kSchemaVersion = 1;

  ModelSpec spec;
  TemporalBasis trends;
  std::vector<std::string> site_ids;  // training sites, layout order
  std::vector<Point> site_coords;
  KnotSet knots;       // LRK knots actually used
  double max_dist = 0.0;
  double fixed_range = 0.0;
  Point tprs_center;   // TPRS standardization
  double tprs_scale = 1.0;

  CovParams xi;
  std::vector<std::string> param_names;  // log-scale free parameters
  VectorXd log_params;
  VectorXd alpha;
  MatrixXd alpha_cov;
  std::vector<std::string> alpha_names;

  double loglik = 0.0;
  double initial_loglik = 0.0;
  double aic = 0.0;
  LikelihoodPath path = LikelihoodPath::NUGGET;
  std::string optimizer_message;
  int iterations = 0;
  int best_start = 0;
  std::vector<OptimTraceEntry> trace;
  std::uint64_t obs_fingerprint = 0;
  std::uint64_t site_fingerprint = 0;
  std::vector<std::string> warnings;

  /// Layout of the training data; not persisted (rebuilt on demand).
  std::shared_ptr<const ModelLayout> layout;

  int num_covariance_params() const { return static_cast<int>(log_params.size()); }
};

/// Starting values: every range at a quarter of the maximum site distance,
/// and the residual variance of an OLS fit on FX split equally among the
/// active variance components. Clamped into the box of make_param_space.
CovParams initialize_params(const ModelLayout& layout);
CovParams initialize_params(const ModelSpec& spec, const SiteTable& sites,
                            const ObservationSet& obs);

/// Maximizes the profile log-likelihood. When `trends` is null the temporal
/// basis is estimated from `obs`.
FittedModel fit(const ModelSpec& spec, const SiteTable& sites, const ObservationSet& obs,
                const TemporalBasis* trends = nullptr);

/// Same as fit, on a prebuilt layout.
FittedModel fit_layout(const ModelSpec& spec, std::shared_ptr<const ModelLayout> layout);

/// Layout of a fitted model for the given data, reusing its temporal basis,
/// knots and basis settings.
ModelLayout rebuild_layout(const FittedModel& model, const SiteTable& sites,
                           const ObservationSet& obs);

}  // namespace rrst
