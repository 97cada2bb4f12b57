#pragma once

#include "rrst/basis.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rrst {

struct BenchOptions {
  std::vector<int> sizes{50, 100, 200, 400};
  int repetitions = 5;
  int rank = 25;
  int num_periods = 100;
  int m = 2;
  std::uint64_t seed = 1;
  std::vector<BasisKind> bases{BasisKind::LRK, BasisKind::TPRS};
};

/// One timing cell. full_rank cells use K = n.
struct BenchCell {
  BasisKind basis = BasisKind::LRK;
  bool full_rank = false;
  int K = 0;
  bool nugget = true;
  int n = 0;
  int N = 0;
  double median_seconds = 0.0;
  int repetitions = 0;
  bool ok = true;
  std::string error;
};

struct BenchSlope {
  BasisKind basis = BasisKind::LRK;
  bool full_rank = false;
  bool nugget = true;
  double slope = 0.0;  // d log(time) / d log(n)
  int points = 0;
};

/// Median wall time of single profile log-likelihood evaluations on
/// home-dominated archetype layouts (10 fixed, 10 snapshot, n - 20 home
/// sites). A failing cell is recorded and the run continues.
std::vector<BenchCell> run_bench(const BenchOptions& options);

/// Least-squares slope of log median time against log n for each
/// (basis, rank class, nugget) group with at least two successful cells.
std::vector<BenchSlope> bench_slopes(const std::vector<BenchCell>& cells);

std::string bench_csv(const std::vector<BenchCell>& cells);
std::string bench_slopes_csv(const std::vector<BenchSlope>& slopes);

}  // namespace rrst
