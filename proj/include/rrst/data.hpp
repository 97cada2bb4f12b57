#pragma once

#include "rrst/common.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rrst {

struct Site {
  std::string id;
  Point coord;
  SiteKind kind = SiteKind::AQS_FIXED;
  VectorXd covariates;  // land-use covariates, one entry per covariate column
};

/// Monitoring (or prediction) locations with their land-use covariates.
class SiteTable {
 public:
  SiteTable() = default;
  explicit SiteTable(std::vector<std::string> covariate_names)
      : covariate_names_(std::move(covariate_names)) {}

  /// Appends a site; throws InputError on duplicate id, wrong covariate
  /// count or non-finite values.
  void add(Site site);

  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  const Site& operator[](std::size_t i) const { return sites_[i]; }
  const std::vector<Site>& sites() const { return sites_; }
  auto begin() const { return sites_.begin(); }
  auto end() const { return sites_.end(); }

  std::optional<std::size_t> find(const std::string& id) const;
  const Site& at(const std::string& id) const;

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  std::size_t num_covariates() const { return covariate_names_.size(); }

  std::vector<Point> coords() const;

  /// Sites whose id satisfies the predicate, in table order.
  SiteTable filter(const std::function<bool(const Site&)>& keep) const;

 private:
  std::vector<std::string> covariate_names_;
  std::vector<Site> sites_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Observation {
  std::string site_id;
  int period = 0;     // two-week bin index counted from the anchor date
  double value = 0.0; // log concentration

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Sparse (site, period) log-concentration records.
class ObservationSet {
 public:
  ObservationSet() = default;
  explicit ObservationSet(std::vector<Observation> records, int anchor_day = 0);

  /// Appends a record; at most one record per (site, period).
  void add(Observation obs);

  const std::vector<Observation>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  /// Days since 1970-01-01 of the first day of period 0.
  int anchor_day() const { return anchor_day_; }
  void set_anchor_day(int day) { anchor_day_ = day; }

  /// One past the largest period index present (0 when empty).
  int num_periods() const;
  /// n_t for t = 0 .. num_periods() - 1.
  std::vector<int> period_counts() const;
  /// Distinct site ids in order of first appearance.
  std::vector<std::string> site_ids() const;

  ObservationSet filter(const std::function<bool(const Observation&)>& keep) const;

 private:
  std::vector<Observation> records_;
  std::set<std::pair<std::string, int>> keys_;
  int anchor_day_ = 0;
};

/// FNV-1a digest of the records in canonical (site id, period) order.
std::uint64_t fingerprint(const ObservationSet& obs);
/// FNV-1a digest of ids, coordinates, kinds and covariates.
std::uint64_t fingerprint(const SiteTable& sites);
std::string fingerprint_hex(std::uint64_t h);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1 denominator)
};

SummaryStats summarize(const std::vector<double>& values);

}  // namespace rrst
