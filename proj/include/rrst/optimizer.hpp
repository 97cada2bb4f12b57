#pragma once

#include "rrst/common.hpp"
#include "rrst/layout.hpp"
#include "rrst/likelihood.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rrst {

struct OptimTraceEntry {
  int iteration = 0;
  double value = 0.0;
  double projected_grad_norm = 0.0;
  VectorXd x;
};

struct OptimResult {
  VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::string message;
  bool gradient_one_sided = false;  // last gradient used a one-sided difference
  std::vector<OptimTraceEntry> trace;
};

/// Raised when the optimizer stops without meeting the convergence rule.
class OptimizationError : public NumericalError {
 public:
  OptimizationError(const std::string& what, std::vector<OptimTraceEntry> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<OptimTraceEntry>& trace() const { return trace_; }

 private:
  std::vector<OptimTraceEntry> trace_;
};

/// Minimizes f over the box [lower, upper] with a projected limited-memory
/// BFGS iteration.
///
/// Converged when the relative change in f between iterations is below
/// rel_tol and the infinity norm of the projected gradient is below
/// grad_tol. Evaluations that throw NumericalError count as +infinity
/// during the line search.
OptimResult minimize_box(const std::function<double(const VectorXd&)>& f,
                         const std::function<GradientResult(const VectorXd&)>& grad,
                         const VectorXd& x0, const VectorXd& lower, const VectorXd& upper,
                         const OptimizerOptions& options, int memory = 8);

/// Projected gradient x - clamp(x - g).
VectorXd projected_gradient(const VectorXd& x, const VectorXd& g, const VectorXd& lower,
                            const VectorXd& upper);

}  // namespace rrst
