#include "rrst/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace rrst {

VectorXd projected_gradient(const VectorXd& x, const VectorXd& g, const VectorXd& lower,
                            const VectorXd& upper) {
  return x - (x - g).cwiseMax(lower).cwiseMin(upper);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const std::function<double(const VectorXd&)>& f, const VectorXd& x) {
  try {
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  } catch (const NumericalError&) {
    return kInf;
  }
}

struct Pair {
  VectorXd s, y;
  double rho;
};

// Two-loop recursion restricted to the free coordinates.
VectorXd lbfgs_direction(const VectorXd& g, const std::deque<Pair>& mem,
                         const std::vector<bool>& free) {
  VectorXd q = g;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!free[i]) q[i] = 0.0;
  }
  std::vector<double> a(mem.size());
  for (int k = static_cast<int>(mem.size()) - 1; k >= 0; --k) {
    a[k] = mem[k].rho * mem[k].s.dot(q);
    q -= a[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double b = mem[k].rho * mem[k].y.dot(q);
    q += (a[k] - b) * mem[k].s;
  }
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!free[i]) q[i] = 0.0;
  }
  return -q;
}

}  // namespace

OptimResult minimize_box(const std::function<double(const VectorXd&)>& f,
                         const std::function<GradientResult(const VectorXd&)>& grad,
                         const VectorXd& x0, const VectorXd& lower, const VectorXd& upper,
                         const OptimizerOptions& options, int memory) {
  OptimResult res;
  VectorXd x = x0.cwiseMax(lower).cwiseMin(upper);
  double fx = safe_eval(f, x);
  ++res.evaluations;
  if (!std::isfinite(fx)) throw NumericalError("objective is not finite at the starting point");

  GradientResult gr = grad(x);
  VectorXd g = gr.gradient;
  std::deque<Pair> mem;
  int small_steps = 0;

  auto record = [&](int it, double pg) { res.trace.push_back({it, fx, pg, x}); };
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << why << " after " << res.iterations << " iterations (objective " << fx << ")";
    throw OptimizationError(os.str(), res.trace);
  };

  double pg_norm = projected_gradient(x, g, lower, upper).lpNorm<Eigen::Infinity>();
  record(0, pg_norm);

  for (int it = 1; it <= options.max_iterations; ++it) {
    res.iterations = it;
    // Coordinates held at a bound by an outward-pointing gradient are fixed.
    std::vector<bool> free(x.size(), true);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) free[i] = false;
    }
    VectorXd d = lbfgs_direction(g, mem, free);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      mem.clear();
      d = lbfgs_direction(g, mem, free);
      slope = g.dot(d);
    }
    if (!(slope < 0.0)) {
      // No free descent direction: projected stationary point.
      res.message = "projected gradient vanished";
      break;
    }
    // Keep the first trial step moderate on the log scale.
    double step = mem.empty() ? std::min(1.0, 1.0 / std::max(1e-12, d.lpNorm<Eigen::Infinity>())) : 1.0;

    VectorXd xn;
    double fn = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = (x + step * d).cwiseMax(lower).cwiseMin(upper);
      fn = safe_eval(f, xn);
      ++res.evaluations;
      if (fn <= fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!mem.empty()) {
        mem.clear();
        continue;
      }
      if (pg_norm < 100.0 * options.grad_tol) {
        res.message = "line search stalled near a stationary point";
        break;
      }
      fail("line search failed");
    }

    const double rel_change = std::abs(fn - fx) / std::max(1.0, std::abs(fx));
    GradientResult gn = grad(xn);
    const VectorXd s = xn - x;
    const VectorXd yv = gn.gradient - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      mem.push_back({s, yv, 1.0 / sy});
      if (static_cast<int>(mem.size()) > memory) mem.pop_front();
    }
    x = xn;
    fx = fn;
    g = gn.gradient;
    gr = std::move(gn);
    pg_norm = projected_gradient(x, g, lower, upper).lpNorm<Eigen::Infinity>();
    record(it, pg_norm);

    if (rel_change < options.rel_tol && pg_norm < options.grad_tol) {
      res.message = "converged";
      break;
    }
    // Finite-difference noise can keep the gradient just above tolerance
    // once the objective no longer moves.
    small_steps = rel_change < 1e-3 * options.rel_tol ? small_steps + 1 : 0;
    if (small_steps >= 5 && pg_norm < 100.0 * options.grad_tol) {
      res.message = "converged (objective stalled)";
      break;
    }
  }
  if (res.message.empty()) fail("iteration limit reached");
  res.x = x;
  res.value = fx;
  res.gradient_one_sided = gr.any_one_sided();
  return res;
}

}  // namespace rrst
