#include "rrst/bench.hpp"

#include "rrst/layout.hpp"
#include "rrst/likelihood.hpp"
#include "rrst/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <new>
#include <sstream>
#include <tuple>

namespace rrst {

std::vector<BenchCell> run_bench(const BenchOptions& options) {
  if (options.repetitions < 1) throw InputError("bench: repetitions must be positive");
  if (options.sizes.empty()) throw InputError("bench: no sizes given");
  std::vector<BenchCell> cells;
  for (int n : options.sizes) {
    if (n < 21) throw InputError("bench: sizes must exceed 20 sites");
    SimLayout sim = make_archetype_layout(10, 10, n - 20, options.num_periods, options.seed, options.m);
    const TemporalBasis trends = seasonal_basis(options.num_periods, options.m, sim.anchor_day);
    SpatialBasisSpec truth_basis;
    truth_basis.kind = BasisKind::FULL;
    const ObservationSet obs = simulate(sim, truth_basis, trends);

    for (BasisKind kind : options.bases) {
      for (bool full : {true, false}) {
        for (bool nugget : {true, false}) {
          BenchCell cell;
          cell.basis = kind;
          cell.full_rank = full;
          cell.K = full ? n : options.rank;
          cell.nugget = nugget;
          cell.n = n;
          try {
            ModelSpec spec;
            spec.m = options.m;
            spec.basis.kind = kind;
            spec.basis.K = cell.K;
            spec.include_beta_nugget = nugget;
            spec.optimizer.seed = options.seed;
            const ModelLayout layout = build_layout(spec, sim.sites, obs, trends);
            cell.N = static_cast<int>(layout.N());
            CovParams params = sim.truth;
            if (!nugget) params.theta_P.reset();
            std::vector<double> times;
            for (int r = 0; r < options.repetitions; ++r) {
              const auto t0 = std::chrono::steady_clock::now();
              const LogLikResult ll = profile_loglik(params, layout);
              const auto t1 = std::chrono::steady_clock::now();
              if (!std::isfinite(ll.value)) throw NumericalError("non-finite log-likelihood");
              times.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            const std::size_t h = times.size() / 2;
            cell.median_seconds = times.size() % 2 ? times[h] : 0.5 * (times[h - 1] + times[h]);
            cell.repetitions = options.repetitions;
          } catch (const std::bad_alloc&) {
            cell.ok = false;
            cell.error = "out of memory";
          } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
          }
          cells.push_back(cell);
        }
      }
    }
  }
  return cells;
}

std::vector<BenchSlope> bench_slopes(const std::vector<BenchCell>& cells) {
  std::map<std::tuple<int, bool, bool>, std::vector<std::pair<double, double>>> groups;
  std::vector<std::tuple<int, bool, bool>> order;
  for (const auto& c : cells) {
    const auto key = std::make_tuple(static_cast<int>(c.basis), c.full_rank, c.nugget);
    if (!groups.count(key)) order.push_back(key);
    auto& g = groups[key];
    if (c.ok && c.median_seconds > 0.0) g.emplace_back(std::log(c.n), std::log(c.median_seconds));
  }
  std::vector<BenchSlope> out;
  for (const auto& key : order) {
    const auto& pts = groups[key];
    if (pts.size() < 2) continue;
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [x, y] : pts) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    BenchSlope s;
    s.basis = static_cast<BasisKind>(std::get<0>(key));
    s.full_rank = std::get<1>(key);
    s.nugget = std::get<2>(key);
    s.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    s.points = static_cast<int>(pts.size());
    out.push_back(s);
  }
  return out;
}

std::string bench_csv(const std::vector<BenchCell>& cells) {
  std::ostringstream os;
  os << "basis,rank,K,nugget,n,N,median_seconds,repetitions,status\n";
  for (const auto& c : cells) {
    os << to_string(c.basis) << ',' << (c.full_rank ? "full" : "reduced") << ',' << c.K << ','
       << (c.nugget ? "on" : "off") << ',' << c.n << ',' << c.N << ','
       << (c.ok ? format_double(c.median_seconds) : "") << ',' << c.repetitions << ','
       << (c.ok ? "ok" : "failed: " + c.error) << '\n';
  }
  return os.str();
}

std::string bench_slopes_csv(const std::vector<BenchSlope>& slopes) {
  std::ostringstream os;
  os << "basis,rank,nugget,slope,points\n";
  for (const auto& s : slopes) {
    os << to_string(s.basis) << ',' << (s.full_rank ? "full" : "reduced") << ','
       << (s.nugget ? "on" : "off") << ',' << format_double(s.slope) << ',' << s.points << '\n';
  }
  return os.str();
}

}  // namespace rrst
