#include "rrst/predict.hpp"

#include <cmath>
#include <limits>

namespace rrst {

namespace {

constexpr Eigen::Index kBatch = 256;

}  // namespace

Predictor::Predictor(std::shared_ptr<const ModelLayout> layout, CovParams params, VectorXd alpha)
    : layout_(std::move(layout)),
      params_(std::move(params)),
      alpha_(std::move(alpha)),
      factor_(*layout_, params_) {
  if (alpha_.size() != layout_->P()) throw InputError("Predictor: alpha has the wrong length");
  const VectorXd r = layout_->stacked.y - layout_->FX * alpha_;
  weights_ = factor_.solve(r).col(0);
  if (layout_->kind == BasisKind::LRK && !layout_->range_mode.is_fixed()) {
    for (int j = 0; j < layout_->m(); ++j) {
      lrk_.push_back(std::make_shared<LrkBasis>(layout_->knots.knots, params_.theta_B[j].range));
    }
  }
}

MatrixXd Predictor::basis_rows(int field, std::span<const Point> pts) const {
  const ModelLayout& L = *layout_;
  switch (L.kind) {
    case BasisKind::TPRS: return L.tprs->penalized_at(pts);
    case BasisKind::LRK:
      return L.range_mode.is_fixed() ? L.lrk_fixed->penalized_at(pts) : lrk_[field]->penalized_at(pts);
    default: return MatrixXd(static_cast<Eigen::Index>(pts.size()), 0);
  }
}

void Predictor::check_target(const Target& t) const {
  if (t.period < 0 || t.period >= layout_->num_periods()) {
    throw InputError("prediction period " + std::to_string(t.period) +
                     " is outside the temporal basis grid [0, " +
                     std::to_string(layout_->num_periods()) + ")");
  }
}

VectorXd Predictor::target_mean(std::span<const Target> targets) const {
  const ModelLayout& L = *layout_;
  VectorXd mu(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    check_target(targets[k]);
    double v = 0.0;
    for (int j = 0; j < L.m(); ++j) {
      const MatrixXd row = design_row_block(L, j, *targets[k].site);
      v += L.trends(targets[k].period, j) *
           row.row(0).dot(alpha_.segment(L.alpha_offset[j], row.cols()));
    }
    mu[static_cast<Eigen::Index>(k)] = v;
  }
  return mu;
}

MatrixXd Predictor::cross_covariance(std::span<const Target> targets) const {
  const ModelLayout& L = *layout_;
  const auto& st = L.stacked;
  const int m = L.m();
  const Eigen::Index M = static_cast<Eigen::Index>(targets.size());
  std::vector<Point> pts;
  for (const auto& t : targets) {
    check_target(t);
    pts.push_back(t.site->coord);
  }
  const MatrixXd D = pairwise_distances(L.coords, pts);  // n x M
  MatrixXd C = MatrixXd::Zero(L.N(), M);

  // Site-level covariance of field j between training site s and target k.
  std::vector<MatrixXd> field_cov(m);
  for (int j = 0; j < m; ++j) {
    const double tau2 = params_.theta_B[j].partial_sill;
    if (L.kind == BasisKind::FULL) {
      field_cov[j] = tau2 * exp_corr(D, L.field_range(j, params_));
    } else if (L.has_penalized()) {
      field_cov[j] = tau2 * factor_.penalized()[j] * basis_rows(j, pts).transpose();
    } else {
      field_cov[j] = MatrixXd::Zero(L.n(), M);
    }
    if (params_.theta_P) {
      const double sig2 = (*params_.theta_P)[j];
      for (Eigen::Index k = 0; k < M; ++k) {
        for (int s = 0; s < L.n(); ++s) {
          if (D(s, k) <= kCoincidentKm) field_cov[j](s, k) += sig2;
        }
      }
    }
  }
  const auto& V = params_.theta_V;
  for (Eigen::Index r = 0; r < L.N(); ++r) {
    const int s = st.row_site[r];
    const int t = st.row_period[r];
    for (Eigen::Index k = 0; k < M; ++k) {
      const int tk = targets[static_cast<std::size_t>(k)].period;
      double c = 0.0;
      for (int j = 0; j < m; ++j) c += L.trends(t, j) * L.trends(tk, j) * field_cov[j](s, k);
      if (t == tk) {
        c += V.partial_sill * std::exp(-D(s, k) / V.range);
        if (D(s, k) <= kCoincidentKm) c += V.nugget;
      }
      C(r, k) = c;
    }
  }
  return C;
}

MatrixXd Predictor::target_covariance(std::span<const Target> targets) const {
  const ModelLayout& L = *layout_;
  const int m = L.m();
  const Eigen::Index M = static_cast<Eigen::Index>(targets.size());
  std::vector<Point> pts;
  for (const auto& t : targets) {
    check_target(t);
    pts.push_back(t.site->coord);
  }
  const MatrixXd D = pairwise_distances(pts);
  MatrixXd S = MatrixXd::Zero(M, M);
  for (int j = 0; j < m; ++j) {
    const double tau2 = params_.theta_B[j].partial_sill;
    MatrixXd G;
    if (L.kind == BasisKind::FULL) {
      G = tau2 * exp_corr(D, L.field_range(j, params_));
    } else if (L.has_penalized()) {
      const MatrixXd Zs = basis_rows(j, pts);
      G = tau2 * Zs * Zs.transpose();
    } else {
      G = MatrixXd::Zero(M, M);
    }
    if (params_.theta_P) G += (*params_.theta_P)[j] * (D.array() <= kCoincidentKm).cast<double>().matrix();
    for (Eigen::Index a = 0; a < M; ++a) {
      for (Eigen::Index b = 0; b < M; ++b) {
        S(a, b) += L.trends(targets[a].period, j) * L.trends(targets[b].period, j) * G(a, b);
      }
    }
  }
  const auto& V = params_.theta_V;
  for (Eigen::Index a = 0; a < M; ++a) {
    for (Eigen::Index b = 0; b < M; ++b) {
      if (targets[a].period != targets[b].period) continue;
      S(a, b) += V.partial_sill * std::exp(-D(a, b) / V.range);
      if (D(a, b) <= kCoincidentKm) S(a, b) += V.nugget;
    }
  }
  return S;
}

MatrixXd Predictor::kriging_weights(std::span<const Target> targets) const {
  return factor_.solve(cross_covariance(targets));
}

void Predictor::conditional(std::span<const Target> targets, VectorXd* mean,
                            VectorXd* variance) const {
  const Eigen::Index M = static_cast<Eigen::Index>(targets.size());
  if (mean) *mean = target_mean(targets);
  if (variance) variance->resize(M);
  for (Eigen::Index b = 0; b < M; b += kBatch) {
    const Eigen::Index len = std::min(kBatch, M - b);
    const auto batch = targets.subspan(static_cast<std::size_t>(b), static_cast<std::size_t>(len));
    const MatrixXd C = cross_covariance(batch);
    if (mean) mean->segment(b, len) += C.transpose() * weights_;
    if (variance) {
      const MatrixXd SC = factor_.solve(C);
      const ModelLayout& L = *layout_;
      for (Eigen::Index k = 0; k < len; ++k) {
        // Own variance without forming the batch's full covariance.
        const Target& t = batch[static_cast<std::size_t>(k)];
        const Point p = t.site->coord;
        double own = params_.theta_V.partial_sill + params_.theta_V.nugget;
        for (int j = 0; j < L.m(); ++j) {
          const double f = L.trends(t.period, j);
          double g = params_.theta_B[j].partial_sill;
          if (L.has_penalized()) {
            g *= basis_rows(j, std::span<const Point>(&p, 1)).squaredNorm();
          } else if (L.kind != BasisKind::FULL) {
            g = 0.0;
          }
          if (params_.theta_P) g += (*params_.theta_P)[j];
          own += f * f * g;
        }
        (*variance)[b + k] = std::max(0.0, own - C.col(k).dot(SC.col(k)));
      }
    }
  }
}

PredictionResult Predictor::predict(const PredictionRequest& req) const {
  if (req.periods.size() != req.sites.size()) {
    throw InputError("prediction request: one period list per site required");
  }
  const ModelLayout& L = *layout_;
  std::size_t needed = 0;
  for (const auto& cols : L.covariate_index) {
    for (int c : cols) needed = std::max(needed, static_cast<std::size_t>(c) + 1);
  }
  std::vector<Target> targets;
  for (std::size_t i = 0; i < req.sites.size(); ++i) {
    if (static_cast<std::size_t>(req.sites[i].covariates.size()) < needed) {
      throw InputError("prediction site '" + req.sites[i].id + "' has " +
                       std::to_string(req.sites[i].covariates.size()) +
                       " covariates, model needs " + std::to_string(needed));
    }
    for (int t : req.periods[i]) {
      targets.push_back({&req.sites[i], t});
      check_target(targets.back());
    }
  }
  VectorXd mean, var;
  conditional(targets, &mean, req.want_variance ? &var : nullptr);

  PredictionResult out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    out.points.push_back({targets[k].site->id, targets[k].period, mean[static_cast<Eigen::Index>(k)],
                          req.want_variance ? var[static_cast<Eigen::Index>(k)]
                                            : std::numeric_limits<double>::quiet_NaN()});
  }
  if (req.want_lta) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < req.sites.size(); ++i) {
      const std::size_t len = req.periods[i].size();
      if (req.lta_all_periods) {
        std::vector<Target> all;
        std::vector<int> idx;
        for (int t = 0; t < L.num_periods(); ++t) {
          all.push_back({&req.sites[i], t});
          idx.push_back(t);
        }
        VectorXd mu;
        conditional(all, &mu, nullptr);
        out.lta.push_back({req.sites[i].id, long_term_average(std::span<const double>(mu.data(), mu.size()), idx)});
      } else if (len > 0) {
        std::vector<double> series(static_cast<std::size_t>(L.num_periods()), 0.0);
        for (std::size_t a = 0; a < len; ++a) {
          series[static_cast<std::size_t>(req.periods[i][a])] = mean[static_cast<Eigen::Index>(k + a)];
        }
        out.lta.push_back({req.sites[i].id, long_term_average(series, req.periods[i])});
      }
      k += len;
    }
  }
  return out;
}

Predictor make_predictor(const FittedModel& model, const SiteTable& sites,
                         const ObservationSet& obs) {
  if (model.obs_fingerprint != 0 && fingerprint(obs) != model.obs_fingerprint) {
    throw InputError("observations differ from the data the model was fitted to (fingerprint " +
                     fingerprint_hex(fingerprint(obs)) + " vs " +
                     fingerprint_hex(model.obs_fingerprint) + ")");
  }
  std::shared_ptr<const ModelLayout> layout = model.layout;
  if (!layout) layout = std::make_shared<const ModelLayout>(rebuild_layout(model, sites, obs));
  return Predictor(layout, model.xi, model.alpha);
}

PredictionResult predict(const FittedModel& model, const SiteTable& sites,
                         const ObservationSet& obs, const PredictionRequest& req) {
  return make_predictor(model, sites, obs).predict(req);
}

double long_term_average(std::span<const double> series, std::span<const int> observed_periods) {
  if (observed_periods.empty()) throw InputError("long_term_average: no observed periods");
  double sum = 0.0;
  for (int t : observed_periods) {
    if (t < 0 || static_cast<std::size_t>(t) >= series.size()) {
      throw InputError("long_term_average: period " + std::to_string(t) + " outside the series");
    }
    sum += std::exp(series[static_cast<std::size_t>(t)]);
  }
  return sum / static_cast<double>(observed_periods.size());
}

}  // namespace rrst
