#include "rrst/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace rrst {

std::string to_string(SiteKind kind) {
  switch (kind) {
    case SiteKind::AQS_FIXED: return "fixed";
    case SiteKind::SNAPSHOT: return "snapshot";
    case SiteKind::HOME: return "home";
  }
  return "fixed";
}

SiteKind site_kind_from_string(const std::string& s) {
  if (s == "fixed" || s == "aqs" || s == "AQS_FIXED") return SiteKind::AQS_FIXED;
  if (s == "snapshot" || s == "SNAPSHOT") return SiteKind::SNAPSHOT;
  if (s == "home" || s == "HOME") return SiteKind::HOME;
  throw InputError("unknown site kind '" + s + "'");
}

void SiteTable::add(Site site) {
  if (index_.count(site.id)) throw InputError("duplicate site id '" + site.id + "'");
  if (!std::isfinite(site.coord.x) || !std::isfinite(site.coord.y)) {
    throw InputError("site '" + site.id + "' has non-finite coordinates");
  }
  if (static_cast<std::size_t>(site.covariates.size()) != covariate_names_.size()) {
    throw InputError("site '" + site.id + "' has " + std::to_string(site.covariates.size()) +
                     " covariates, expected " + std::to_string(covariate_names_.size()));
  }
  if (!site.covariates.allFinite()) {
    throw InputError("site '" + site.id + "' has non-finite covariates");
  }
  index_.emplace(site.id, sites_.size());
  sites_.push_back(std::move(site));
}

std::optional<std::size_t> SiteTable::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Site& SiteTable::at(const std::string& id) const {
  auto i = find(id);
  if (!i) throw InputError("unknown site '" + id + "'");
  return sites_[*i];
}

std::vector<Point> SiteTable::coords() const {
  std::vector<Point> out;
  out.reserve(sites_.size());
  for (const auto& s : sites_) out.push_back(s.coord);
  return out;
}

SiteTable SiteTable::filter(const std::function<bool(const Site&)>& keep) const {
  SiteTable out(covariate_names_);
  for (const auto& s : sites_) {
    if (keep(s)) out.add(s);
  }
  return out;
}

ObservationSet::ObservationSet(std::vector<Observation> records, int anchor_day)
    : anchor_day_(anchor_day) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void ObservationSet::add(Observation obs) {
  if (obs.period < 0) throw InputError("negative period index for site '" + obs.site_id + "'");
  if (!std::isfinite(obs.value)) {
    throw InputError("non-finite value for site '" + obs.site_id + "'");
  }
  if (!keys_.emplace(obs.site_id, obs.period).second) {
    throw InputError("duplicate observation for site '" + obs.site_id + "' in period " +
                     std::to_string(obs.period));
  }
  records_.push_back(std::move(obs));
}

int ObservationSet::num_periods() const {
  int t = 0;
  for (const auto& r : records_) t = std::max(t, r.period + 1);
  return t;
}

std::vector<int> ObservationSet::period_counts() const {
  std::vector<int> n(num_periods(), 0);
  for (const auto& r : records_) ++n[r.period];
  return n;
}

std::vector<std::string> ObservationSet::site_ids() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : records_) {
    if (seen.insert(r.site_id).second) out.push_back(r.site_id);
  }
  return out;
}

ObservationSet ObservationSet::filter(const std::function<bool(const Observation&)>& keep) const {
  ObservationSet out;
  out.anchor_day_ = anchor_day_;
  for (const auto& r : records_) {
    if (keep(r)) out.add(r);
  }
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;

  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void str(const std::string& s) {
    const std::uint64_t n = s.size();
    bytes(&n, sizeof n);
    bytes(s.data(), s.size());
  }
  void num(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    bytes(&bits, sizeof bits);
  }
  void num(std::int64_t v) { bytes(&v, sizeof v); }
};

}  // namespace

std::uint64_t fingerprint(const ObservationSet& obs) {
  std::vector<const Observation*> order;
  for (const auto& r : obs) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const Observation* a, const Observation* b) {
    return a->site_id < b->site_id || (a->site_id == b->site_id && a->period < b->period);
  });
  Fnv1a f;
  f.num(static_cast<std::int64_t>(obs.anchor_day()));
  for (const auto* r : order) {
    f.str(r->site_id);
    f.num(static_cast<std::int64_t>(r->period));
    f.num(r->value);
  }
  return f.h;
}

std::uint64_t fingerprint(const SiteTable& sites) {
  Fnv1a f;
  for (const auto& name : sites.covariate_names()) f.str(name);
  for (const auto& s : sites) {
    f.str(s.id);
    f.num(s.coord.x);
    f.num(s.coord.y);
    f.num(static_cast<std::int64_t>(s.kind));
    for (Eigen::Index k = 0; k < s.covariates.size(); ++k) f.num(s.covariates[k]);
  }
  return f.h;
}

std::string fingerprint_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace rrst
