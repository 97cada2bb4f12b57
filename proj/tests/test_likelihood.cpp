#include "doctest.h"

#include "oracles.hpp"
#include "rrst/likelihood.hpp"
#include "rrst/optimizer.hpp"

#include <cstring>
#include <numbers>

using namespace rrst;
using oracle::rel_diff;

namespace {

struct Instance {
  oracle::Scatter data;
  ModelLayout layout;
  CovParams params;
};

Instance instance(std::uint64_t seed, BasisKind kind, int n, int T, int m, int K, bool nugget,
                  RangeMode range_mode = {}) {
  Rng rng(seed);
  Instance in{oracle::random_scatter(rng, n, T, 0.4), {}, {}};
  in.layout = oracle::make_layout(in.data, oracle::model_spec(kind, K, m, nugget, range_mode));
  in.params = oracle::random_params(rng, m, nugget);
  return in;
}

double dense_value(const Instance& in) {
  const auto items = oracle::observation_items(in.layout);
  const MatrixXd sigma = oracle::dense_model(in.layout, in.params).cov(items, items);
  return oracle::profile_loglik(sigma, oracle::dense_FX(in.layout), in.layout.stacked.y).value;
}

}  // namespace

TEST_CASE("block likelihood matches the dense construction") {
  struct Case {
    BasisKind kind;
    int K;
    int m;
    bool nugget;
    RangeMode range;
  };
  const std::vector<Case> cases{
      {BasisKind::TPRS, 6, 2, true, {}},   {BasisKind::TPRS, 6, 2, false, {}},
      {BasisKind::LRK, 6, 2, true, {}},    {BasisKind::LRK, 6, 2, false, {}},
      {BasisKind::LRK, 15, 1, true, {}},   {BasisKind::TPRS, 15, 1, false, {}},
      {BasisKind::NONE, 0, 2, true, {}},   {BasisKind::NONE, 0, 1, false, {}},
      {BasisKind::FULL, 0, 2, true, {}},   {BasisKind::FULL, 0, 2, false, {}},
      {BasisKind::LRK, 5, 2, true, RangeMode::fixed_fraction(0.5)},
  };
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    const Instance in = instance(seed++, c.kind, 15, 8, c.m, c.K, c.nugget, c.range);
    const LogLikResult ll = profile_loglik(in.params, in.layout, in.layout.stacked.y);
    CAPTURE(to_string(c.kind));
    CAPTURE(c.nugget);
    CHECK(rel_diff(ll.value, dense_value(in)) < 1e-6);
    if (c.kind == BasisKind::FULL) {
      CHECK(ll.path == LikelihoodPath::DENSE);
    } else {
      CHECK(ll.path == (c.nugget ? LikelihoodPath::NUGGET : LikelihoodPath::NO_NUGGET));
    }
  }
}

TEST_CASE("identity covariance gives the ordinary least squares likelihood") {
  Rng rng(7);
  const oracle::Scatter sc = oracle::random_scatter(rng, 12, 6, 0.5);
  const ModelLayout layout = oracle::make_layout(sc, oracle::model_spec(BasisKind::NONE, 0, 2, false));
  CovParams p;
  p.theta_B = {{10.0, 0.0, 0.0}, {10.0, 0.0, 0.0}};
  p.theta_V = {5.0, 0.0, 1.0};
  const VectorXd& y = layout.stacked.y;
  const MatrixXd X = oracle::dense_FX(layout);
  const VectorXd ols = X.colPivHouseholderQr().solve(y);
  const double rss = (y - X * ols).squaredNorm();
  const double want = -0.5 * (static_cast<double>(y.size()) * std::log(2 * std::numbers::pi) + rss);
  const LogLikResult ll = profile_loglik(p, layout, y);
  CHECK(ll.value == doctest::Approx(want).epsilon(1e-12));
  CHECK((gls_alpha(p, layout, y) - ols).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("generalized least squares") {
  const Instance in = instance(9, BasisKind::TPRS, 14, 7, 2, 7, true);
  const VectorXd& y = in.layout.stacked.y;
  const VectorXd alpha = gls_alpha(in.params, in.layout, y);
  const auto items = oracle::observation_items(in.layout);
  const MatrixXd sigma = oracle::dense_model(in.layout, in.params).cov(items, items);
  const MatrixXd X = oracle::dense_FX(in.layout);
  // Brute force: the non-profiled likelihood is maximized at alpha.
  const oracle::DenseLogLik dense = oracle::profile_loglik(sigma, X, y);
  CHECK((alpha - dense.alpha).cwiseAbs().maxCoeff() < 1e-8);
  const double at_hat = oracle::gaussian_loglik(sigma, y - X * alpha);
  Rng rng(1);
  for (int r = 0; r < 5; ++r) {
    VectorXd step(alpha.size());
    for (auto& v : step) v = 1e-3 * rng.normal();
    CHECK(oracle::gaussian_loglik(sigma, y - X * (alpha + step)) < at_hat);
  }
  // Residual is Sigma~^{-1}-orthogonal to the columns of FX.
  const VectorXd r = y - X * alpha;
  const VectorXd w = sigma.ldlt().solve(r);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    CHECK(std::abs(X.col(j).dot(w)) / (X.col(j).norm() * w.norm()) < 1e-8);
  }
}

TEST_CASE("full likelihood at the GLS estimate equals the profile likelihood") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Instance in = instance(200 + s, s % 2 ? BasisKind::LRK : BasisKind::TPRS, 13, 6, 2, 6, s < 2);
    const VectorXd& y = in.layout.stacked.y;
    const LogLikResult ll = profile_loglik(in.params, in.layout, y);
    CHECK(rel_diff(full_loglik(in.params, in.layout, y, ll.alpha_hat), ll.value) < 1e-10);
  }
}

TEST_CASE("collinear covariates are rejected") {
  Rng rng(10);
  const oracle::Scatter base = oracle::random_scatter(rng, 10, 5, 0.5);
  SiteTable sites({"a", "b"});
  for (const auto& s : base.sites) {
    Site copy = s;
    copy.covariates = VectorXd::Constant(2, s.covariates(0));
    sites.add(copy);
  }
  ModelSpec spec = oracle::model_spec(BasisKind::NONE, 0, 1, false);
  CovParams p;
  p.theta_B = {{10.0, 0.0, 0.0}};
  p.theta_V = {5.0, 0.1, 0.5};
  bool raised = false;
  try {
    const ModelLayout layout = build_layout(spec, sites, base.obs, seasonal_basis(5, 1));
    profile_loglik(p, layout);
  } catch (const InputError& e) {
    raised = std::string(e.what()).find("b") != std::string::npos;
  }
  CHECK(raised);
}

TEST_CASE("nugget path approaches the nugget-free path") {
  Instance in = instance(12, BasisKind::TPRS, 15, 8, 2, 6, false);
  const double without = profile_loglik(in.params, in.layout).value;
  const ModelLayout with_layout =
      oracle::make_layout(in.data, oracle::model_spec(BasisKind::TPRS, 6, 2, true));
  CovParams p = in.params;
  p.theta_P = std::vector<double>{1e-8, 1e-8};
  const double with = profile_loglik(p, with_layout).value;
  CHECK(std::abs(with - without) < 1e-3);
}

TEST_CASE("likelihood evaluation is deterministic and order invariant") {
  const Instance in = instance(13, BasisKind::TPRS, 16, 7, 2, 8, true);
  const double a = profile_loglik(in.params, in.layout).value;
  const double b = profile_loglik(in.params, in.layout).value;
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);

  // Reverse the site table and the observation records.
  SiteTable sites(in.data.sites.covariate_names());
  for (auto it = in.data.sites.sites().rbegin(); it != in.data.sites.sites().rend(); ++it) sites.add(*it);
  ObservationSet obs;
  for (auto it = in.data.obs.records().rbegin(); it != in.data.obs.records().rend(); ++it) obs.add(*it);
  for (BasisKind kind : {BasisKind::TPRS, BasisKind::FULL}) {
    const ModelSpec spec = oracle::model_spec(kind, kind == BasisKind::TPRS ? 8 : 0, 2, true);
    const ModelLayout original = oracle::make_layout(in.data, spec);
    const ModelLayout permuted = build_layout(spec, sites, obs, seasonal_basis(7, 2));
    CHECK(rel_diff(profile_loglik(in.params, permuted).value, profile_loglik(in.params, original).value) < 1e-9);
  }
}

TEST_CASE("parameter space") {
  const Instance in = instance(14, BasisKind::LRK, 12, 5, 2, 5, true);
  const ParamSpace s = make_param_space(in.layout);
  CHECK(s.names == std::vector<std::string>{"log_range_B1", "log_sill_B1", "log_range_B2", "log_sill_B2",
                                            "log_nugget_P1", "log_nugget_P2", "log_range_V", "log_sill_V",
                                            "log_nugget_V"});
  CHECK(s.lower(0) == doctest::Approx(std::log(1e-3 * in.layout.max_dist)));
  CHECK(s.upper(0) == doctest::Approx(std::log(10 * in.layout.max_dist)));
  CHECK(s.lower(1) == doctest::Approx(std::log(1e-8)));
  CHECK(s.upper(1) == doctest::Approx(std::log(100 * in.layout.y_variance)));
  const VectorXd x = s.pack(in.params);
  CHECK((s.pack(s.unpack(x)) - x).cwiseAbs().maxCoeff() < 1e-14);

  const ModelLayout tprs = oracle::make_layout(in.data, oracle::model_spec(BasisKind::TPRS, 5, 2, false));
  CHECK(make_param_space(tprs).names ==
        std::vector<std::string>{"log_sill_B1", "log_sill_B2", "log_range_V", "log_sill_V", "log_nugget_V"});
  const ModelLayout fixed = oracle::make_layout(
      in.data, oracle::model_spec(BasisKind::LRK, 5, 1, true, RangeMode::fixed_fraction(0.25)));
  CHECK(make_param_space(fixed).names ==
        std::vector<std::string>{"log_sill_B1", "log_nugget_P1", "log_range_V", "log_sill_V", "log_nugget_V"});
}

TEST_CASE("finite-difference gradient") {
  // Quadratic objective through the same harness.
  const VectorXd a = (VectorXd(3) << 1.5, -2.0, 0.5).finished();
  auto quad = [&](const VectorXd& x) { return x.dot(a.asDiagonal() * x) + 3.0 * x.sum(); };
  const VectorXd x = (VectorXd(3) << 0.3, -1.2, 2.0).finished();
  const VectorXd big = VectorXd::Constant(3, 100.0);
  const GradientResult g = numeric_gradient(quad, x, -big, big);
  const VectorXd exact = 2.0 * a.cwiseProduct(x) + VectorXd::Constant(3, 3.0);
  CHECK((g.gradient - exact).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(!g.any_one_sided());

  // Random instance: directional derivatives against a second difference scheme.
  const Instance in = instance(15, BasisKind::TPRS, 14, 6, 2, 6, true);
  const ParamSpace s = make_param_space(in.layout);
  const VectorXd x0 = s.pack(in.params);
  const GradientResult lg = loglik_gradient(in.params, in.layout, in.layout.stacked.y);
  auto f = [&](const VectorXd& v) { return profile_loglik(s.unpack(v), in.layout).value; };
  Rng rng(3);
  for (int r = 0; r < 5; ++r) {
    VectorXd v(x0.size());
    for (auto& e : v) e = rng.normal();
    v.normalize();
    const double h = 1e-4;
    const double fd = (f(x0 + h * v) - f(x0 - h * v)) / (2 * h);
    CHECK(std::abs(lg.gradient.dot(v) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }

  // A variance at its lower bound gets a one-sided difference.
  CovParams low = in.params;
  low.theta_B[1].partial_sill = 1e-8;
  const GradientResult edge = loglik_gradient(low, in.layout, in.layout.stacked.y);
  CHECK(edge.one_sided[1]);
  CHECK(edge.any_one_sided());
}

TEST_CASE("box-constrained minimizer") {
  OptimizerOptions opt;
  opt.max_iterations = 500;
  const VectorXd lo = VectorXd::Constant(2, -2.0), hi = VectorXd::Constant(2, 2.0);
  auto rosen = [](const VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  auto grad = [&](const VectorXd& x) { return numeric_gradient(rosen, x, lo, hi, 1e-7); };
  const OptimResult r = minimize_box(rosen, grad, VectorXd::Constant(2, -1.2), lo, hi, opt);
  CHECK(std::abs(r.x(0) - 1.0) < 1e-3);
  CHECK(std::abs(r.x(1) - 1.0) < 2e-3);
  CHECK(!r.trace.empty());

  // Unconstrained optimum outside the box lands on the bound.
  auto bowl = [](const VectorXd& x) { return (x - VectorXd::Constant(2, 5.0)).squaredNorm(); };
  auto bowl_grad = [&](const VectorXd& x) { return numeric_gradient(bowl, x, lo, hi); };
  const OptimResult b = minimize_box(bowl, bowl_grad, VectorXd::Zero(2), lo, hi, opt);
  CHECK(b.x(0) == doctest::Approx(2.0));
  CHECK(b.x(1) == doctest::Approx(2.0));

  OptimizerOptions tight = opt;
  tight.max_iterations = 2;
  CHECK_THROWS_AS(minimize_box(rosen, grad, VectorXd::Constant(2, -1.2), lo, hi, tight), OptimizationError);
}

TEST_CASE("parameter mismatch is reported") {
  const Instance in = instance(16, BasisKind::TPRS, 12, 5, 2, 5, true);
  CovParams p = in.params;
  p.theta_B.pop_back();
  CHECK_THROWS_AS(profile_loglik(p, in.layout), InputError);
  p = in.params;
  p.theta_V.nugget = -1.0;
  CHECK_THROWS_AS(profile_loglik(p, in.layout), InputError);
}
