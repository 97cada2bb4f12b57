#pragma once

#include "rrst/data.hpp"
#include "rrst/evaluation.hpp"
#include "rrst/fit.hpp"
#include "rrst/predict.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rrst {

/// Days since 1970-01-01 for an ISO-8601 calendar date (YYYY-MM-DD).
int parse_date(const std::string& s);
std::string format_date(int day);

/// Sites file: header `site_id,x_km,y_km,kind[,covariate...]`.
SiteTable read_sites_csv(const std::filesystem::path& path);
std::string sites_csv(const SiteTable& sites);
void write_sites_csv(const std::filesystem::path& path, const SiteTable& sites);

/// Observations file: header `site_id,date,log_value`. Periods are
/// consecutive 14-day bins counted from the earliest date, which becomes the
/// anchor day; dates must fall on a bin start.
ObservationSet read_obs_csv(const std::filesystem::path& path);
std::string obs_csv(const ObservationSet& obs);
void write_obs_csv(const std::filesystem::path& path, const ObservationSet& obs);

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);

std::string predictions_csv(const PredictionResult& result, int anchor_day);
std::string lta_csv(const PredictionResult& result);
std::string cv_report_json(const std::vector<CVReport>& reports);

/// Human-readable fit summary: data summary by site kind, log-likelihood,
/// AIC and the parameter table.
std::string fit_report(const FittedModel& model, const SiteTable& sites, const ObservationSet& obs);

/// Penalized basis (and TPRS unpenalized columns) at the training sites.
std::string basis_csv(const FittedModel& model);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rrst
