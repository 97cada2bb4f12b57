#pragma once

#include "rrst/fit.hpp"
#include "rrst/likelihood.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rrst {

/// Target sites and, per site, the period indices to predict.
struct PredictionRequest {
  std::vector<Site> sites;
  std::vector<std::vector<int>> periods;  // parallel to sites
  bool want_variance = true;
  bool want_lta = true;
  /// Average over every grid period instead of only the requested ones.
  bool lta_all_periods = false;
};

struct PredictionPoint {
  std::string site_id;
  int period = 0;
  double mean = 0.0;      // log scale
  double variance = 0.0;  // NaN when not requested
};

struct SiteLta {
  std::string site_id;
  double lta_native = 0.0;
};

struct PredictionResult {
  std::vector<PredictionPoint> points;
  std::vector<SiteLta> lta;
};

/// (site, period) pair addressed by a prediction.
struct Target {
  const Site* site;
  int period;
};

/// Plug-in conditional Gaussian predictor
///
///   E[Y* | Y] = F* X* alpha + S*.^T Sigma~^{-1} (Y - F X alpha)
///   V[Y* | Y] = S** - S*.^T Sigma~^{-1} S*.
///
/// with one shared factorization of Sigma~. Targets are observation-level
/// quantities: the residual nugget enters the cross-covariance only when a
/// target coincides with an observed site-period, and the beta-field nugget
/// only when the target site coincides with a training site.
class Predictor {
 public:
  Predictor(std::shared_ptr<const ModelLayout> layout, CovParams params, VectorXd alpha);

  PredictionResult predict(const PredictionRequest& req) const;

  /// F* X* alpha.
  VectorXd target_mean(std::span<const Target> targets) const;
  /// N x M covariance between the observations and the targets.
  MatrixXd cross_covariance(std::span<const Target> targets) const;
  /// M x M covariance among the targets.
  MatrixXd target_covariance(std::span<const Target> targets) const;
  /// Sigma~^{-1} S*. (N x M); the conditional mean is linear in Y with these weights.
  MatrixXd kriging_weights(std::span<const Target> targets) const;

  /// Conditional means and (optionally) variances of the targets.
  void conditional(std::span<const Target> targets, VectorXd* mean, VectorXd* variance) const;

  const ModelLayout& layout() const { return *layout_; }
  const SigmaFactor& factor() const { return factor_; }

 private:
  MatrixXd basis_rows(int field, std::span<const Point> pts) const;
  void check_target(const Target& t) const;

  std::shared_ptr<const ModelLayout> layout_;
  CovParams params_;
  VectorXd alpha_;
  SigmaFactor factor_;
  VectorXd weights_;  // Sigma~^{-1} (y - F X alpha)
  std::vector<std::shared_ptr<const LrkBasis>> lrk_;  // per field, range-estimated LRK
};

/// Predictor for a fitted model on its training data. Throws InputError when
/// `obs` differs from the data the model was fitted to.
Predictor make_predictor(const FittedModel& model, const SiteTable& sites,
                         const ObservationSet& obs);

PredictionResult predict(const FittedModel& model, const SiteTable& sites,
                         const ObservationSet& obs, const PredictionRequest& req);

/// Mean of exp(series[t]) over the observed periods t.
double long_term_average(std::span<const double> series, std::span<const int> observed_periods);

}  // namespace rrst
