#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrst {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Planar location in kilometers.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

enum class SiteKind { AQS_FIXED, SNAPSHOT, HOME };

std::string to_string(SiteKind kind);
SiteKind site_kind_from_string(const std::string& s);

/// Raised on invalid arguments or data that violate an operation's contract.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a factorization or numerical procedure breaks down.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double; empty for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Two sites closer than this are treated as the same location.
inline constexpr double kCoincidentKm = 1e-9;

}  // namespace rrst
