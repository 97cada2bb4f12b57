#pragma once

#include "rrst/fit.hpp"
#include "rrst/predict.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rrst {

/// Site-level fold assignment for one monitor class.
struct CVPlan {
  SiteKind site_class = SiteKind::AQS_FIXED;
  int k = 10;
  std::uint64_t seed = 1;
  std::map<std::string, int> fold_of;          // site id -> fold in 1..k
  std::vector<std::vector<std::string>> folds;  // folds[f - 1], site-table order
};

/// Random balanced partition of the class's sites into k folds: the sites
/// are shuffled and dealt round-robin. With cluster_km > 0, sites closer
/// than cluster_km (single linkage) stay in one fold and clusters are dealt
/// instead, largest first.
CVPlan make_folds(const SiteTable& sites, SiteKind site_class, int k, std::uint64_t seed,
                  double cluster_km = 0.0);

enum class ScoreScale { NATIVE, LOG };

struct Score {
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t count = 0;
};

double rmse(std::span<const double> pred, std::span<const double> obs);
/// Population variance (divide by n).
double population_variance(std::span<const double> v);
/// max{0, 1 - RMSE^2 / Var(obs)}.
double clamped_r2(std::span<const double> pred, std::span<const double> obs);
/// R^2 on long-term averages; needs at least two sites with varying c(s).
double r2_lta(std::span<const double> pred_lta, std::span<const double> obs_lta);
/// R^2 whose denominator is the variance of obs - reference.
double detrended_r2(std::span<const double> pred, std::span<const double> obs,
                    std::span<const double> reference);

/// Per-period mean of fixed-site observations on the given scale, indexed by
/// period (NaN where no fixed site reports).
std::vector<double> fixed_site_reference(const SiteTable& sites, const ObservationSet& obs,
                                         ScoreScale scale);

/// Meteorological season of a period start: "winter" (Dec-Feb), "spring",
/// "summer", "fall".
std::string season_of_period(int anchor_day, int period);

struct CVPoint {
  std::string site_id;
  int period = 0;
  int fold = 0;
  double obs_log = 0.0;
  double pred_log = 0.0;
};

struct FoldDiagnostics {
  int fold = 0;
  bool ok = false;
  std::string error;
  std::vector<std::string> held_out;
  std::string train_fingerprint;
  bool leakage_free = true;
  double loglik = 0.0;
  std::vector<std::string> param_names;
  std::vector<double> log_params;
};

struct CVOptions {
  bool refit_trends = false;
  ScoreScale scale = ScoreScale::NATIVE;
  /// Skip fitting and predict the held-out observations themselves.
  bool perfect_predictor = false;
  const TemporalBasis* trends = nullptr;  // estimated from all data when null
};

struct CVReport {
  SiteKind site_class = SiteKind::AQS_FIXED;
  int k = 0;
  std::uint64_t seed = 0;
  std::string model_label;
  int rank = 0;
  ScoreScale scale = ScoreScale::NATIVE;
  Score two_week;
  std::optional<Score> lta;
  std::map<std::string, Score> by_season;  // snapshot class
  std::optional<Score> detrended;           // home class, two-week scale
  std::vector<FoldDiagnostics> folds;
  bool any_fold_failed = false;
  std::vector<CVPoint> points;
};

CVReport cross_validate(const ModelSpec& spec, const SiteTable& sites, const ObservationSet& obs,
                        const CVPlan& plan, const CVOptions& options = {});

/// Scores CV points; exposed for injected predictions.
void score_points(CVReport& report, const SiteTable& sites, const ObservationSet& obs,
                  int anchor_day);

/// Row label of a model in CV tables: basis name plus range mode for
/// range-dependent bases.
std::string model_row_label(const ModelSpec& spec);

/// Flat table: one row per (model label, metric), one column per rank in
/// descending order.
std::string cv_table_csv(const std::vector<CVReport>& reports);

}  // namespace rrst
