#include "doctest.h"

#include "oracles.hpp"
#include "rrst/fit.hpp"
#include "rrst/predict.hpp"
#include "rrst/simulate.hpp"

#include <memory>

using namespace rrst;
using oracle::rel_diff;

namespace {

ModelSpec quick(ModelSpec spec) {
  spec.optimizer.max_iterations = 400;
  return spec;
}

struct PredictionCase {
  oracle::Scatter data;
  std::shared_ptr<ModelLayout> layout;
  CovParams params;
  VectorXd alpha;
  std::vector<Site> new_sites;
};

PredictionCase prediction_case(std::uint64_t seed, BasisKind kind, int K, bool nugget) {
  Rng rng(seed);
  PredictionCase c;
  c.data = oracle::random_scatter(rng, 14, 6, 0.4);
  c.layout = std::make_shared<ModelLayout>(
      oracle::make_layout(c.data, oracle::model_spec(kind, K, 2, nugget)));
  c.params = oracle::random_params(rng, 2, nugget);
  c.alpha.resize(c.layout->P());
  for (auto& v : c.alpha) v = rng.normal();
  for (int i = 0; i < 3; ++i) {
    Site s;
    s.id = "new" + std::to_string(i);
    s.coord = {rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)};
    s.covariates = VectorXd::Constant(1, rng.normal());
    c.new_sites.push_back(s);
  }
  return c;
}

}  // namespace

TEST_CASE("initial values split the residual variance") {
  Rng rng(1);
  const oracle::Scatter sc = oracle::random_scatter(rng, 12, 6, 0.5);
  ModelLayout L = oracle::make_layout(sc, oracle::model_spec(BasisKind::NONE, 0, 2, false));
  const MatrixXd X = L.FX;
  VectorXd e(L.N());
  for (auto& v : e) v = rng.normal();
  e -= X * X.colPivHouseholderQr().solve(e);
  e *= std::sqrt(4.0 * static_cast<double>(L.N())) / e.norm();
  L.stacked.y = X * VectorXd::Ones(X.cols()) + e;
  L.y_variance = 4.0;
  const CovParams p = initialize_params(L);
  CHECK(p.theta_V.partial_sill == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(p.theta_V.nugget == doctest::Approx(2.0).epsilon(1e-10));

  L.stacked.y = X * VectorXd::Ones(X.cols());
  CHECK_THROWS_AS(initialize_params(L), InputError);
}

TEST_CASE("initial ranges are a quarter of the maximum distance") {
  Rng rng(2);
  oracle::Scatter sc = oracle::random_scatter(rng, 10, 5, 0.6, 40.0);
  SiteTable sites({"lu1"});
  for (const auto& s : sc.sites) {
    Site copy = s;
    copy.coord = {20.0 + s.coord.x / 4.0, s.coord.y / 4.0};
    sites.add(copy);
  }
  SiteTable stretched({"lu1"});
  for (std::size_t i = 0; i < sites.size(); ++i) {
    Site s = sites[i];
    if (i == 0) s.coord = {0.0, 0.0};
    if (i == 1) s.coord = {80.0, 0.0};
    stretched.add(s);
  }
  sc.sites = stretched;
  const ModelLayout L = oracle::make_layout(sc, oracle::model_spec(BasisKind::LRK, 5, 2, true));
  CHECK(L.max_dist == doctest::Approx(80.0));
  const CovParams p = initialize_params(L);
  CHECK(p.theta_B[0].range == doctest::Approx(20.0));
  CHECK(p.theta_B[1].range == doctest::Approx(20.0));
  CHECK(p.theta_V.range == doctest::Approx(20.0));
}

TEST_CASE("initial values always lie inside the box") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(1000 + s);
    const oracle::Scatter sc = oracle::random_scatter(rng, 8 + static_cast<int>(s % 5), 4, 0.5, rng.uniform(1.0, 500.0));
    const BasisKind kind = s % 3 == 0 ? BasisKind::LRK : (s % 3 == 1 ? BasisKind::TPRS : BasisKind::NONE);
    const int K = kind == BasisKind::NONE ? 0 : 4;
    const ModelLayout L = oracle::make_layout(sc, oracle::model_spec(kind, K, 1 + static_cast<int>(s % 2), s % 4 != 0));
    const ParamSpace space = make_param_space(L);
    const VectorXd x = space.pack(initialize_params(L));
    CHECK((x.array() >= space.lower.array()).all());
    CHECK((x.array() <= space.upper.array()).all());
  }
}

TEST_CASE("rank-zero fit equals generalized least squares on the residual field") {
  Rng rng(3);
  const oracle::Scatter sc = oracle::random_scatter(rng, 12, 8, 0.5);
  const ModelSpec spec = quick(oracle::model_spec(BasisKind::NONE, 0, 2, false));
  const TemporalBasis trends = seasonal_basis(8, 2);
  const FittedModel fm = fit(spec, sc.sites, sc.obs, &trends);
  CHECK(fm.loglik >= fm.initial_loglik);
  // Direct GLS with the residual covariance built entry by entry.
  const ModelLayout& L = *fm.layout;
  const auto items = oracle::observation_items(L);
  MatrixXd S(L.N(), L.N());
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = 0; j < items.size(); ++j) {
      double c = 0.0;
      if (items[i].period == items[j].period) {
        const double d = oracle::dist(items[i].coord, items[j].coord);
        c = fm.xi.theta_V.partial_sill * std::exp(-d / fm.xi.theta_V.range) + (i == j ? fm.xi.theta_V.nugget : 0.0);
      }
      S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
    }
  MatrixXd X(L.N(), 4);
  for (std::size_t r = 0; r < items.size(); ++r) {
    const Site& s = sc.sites.at(L.stacked.site_ids[L.stacked.row_site[r]]);
    const int t = L.stacked.row_period[r];
    X.row(static_cast<Eigen::Index>(r)) << trends(t, 0), trends(t, 0) * s.covariates(0), trends(t, 1),
        trends(t, 1) * s.covariates(0);
  }
  const oracle::DenseLogLik d = oracle::profile_loglik(S, X, L.stacked.y);
  CHECK((fm.alpha - d.alpha).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(rel_diff(fm.loglik, d.value) < 1e-9);
}

TEST_CASE("fit is deterministic, ascends and is translation invariant for tprs") {
  SimLayout sim = make_archetype_layout(15, 0, 10, 12, 4);
  SpatialBasisSpec truth;
  truth.kind = BasisKind::TPRS;
  truth.K = 6;
  const TemporalBasis trends = seasonal_basis(12, 2, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  const ModelSpec spec = quick(oracle::model_spec(BasisKind::TPRS, 6, 2, true));
  const FittedModel a = fit(spec, sim.sites, obs, &trends);
  const FittedModel b = fit(spec, sim.sites, obs, &trends);
  CHECK(a.log_params == b.log_params);
  CHECK(a.loglik == b.loglik);
  CHECK(a.loglik >= a.initial_loglik);
  CHECK(a.aic == doctest::Approx(2.0 * (a.num_covariance_params() + a.alpha.size()) - 2.0 * a.loglik));

  SiteTable moved(sim.sites.covariate_names());
  for (const auto& s : sim.sites) {
    Site c = s;
    c.coord = {s.coord.x + 750.0, s.coord.y - 120.0};
    moved.add(c);
  }
  const FittedModel m = fit(spec, moved, obs, &trends);
  CHECK(std::abs(m.loglik - a.loglik) < 1e-6);
}

TEST_CASE("fixed range sensitivity grid") {
  SimLayout sim = make_archetype_layout(12, 0, 8, 10, 6);
  SpatialBasisSpec truth;
  truth.kind = BasisKind::FULL;
  const TemporalBasis trends = seasonal_basis(10, 2, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  std::vector<double> ranges;
  for (const char* mode : {"fixed:max", "fixed:max/2", "fixed:max/4", "fixed:max/8"}) {
    const ModelSpec spec = quick(oracle::model_spec(BasisKind::LRK, 8, 2, true, RangeMode::parse(mode)));
    const FittedModel fm = fit(spec, sim.sites, obs, &trends);
    CHECK(std::isfinite(fm.loglik));
    ranges.push_back(fm.fixed_range);
    CHECK(fm.param_names.front() == "log_sill_B1");
  }
  REQUIRE(ranges.size() == 4);
  CHECK(ranges[1] == doctest::Approx(ranges[0] / 2));
  CHECK(ranges[2] == doctest::Approx(ranges[0] / 4));
  CHECK(ranges[3] == doctest::Approx(ranges[0] / 8));
}

TEST_CASE("low-rank models without nugget warn") {
  SimLayout sim = make_archetype_layout(12, 0, 6, 10, 8);
  SpatialBasisSpec truth;
  truth.kind = BasisKind::NONE;
  const TemporalBasis trends = seasonal_basis(10, 2, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  const FittedModel fm = fit(quick(oracle::model_spec(BasisKind::TPRS, 5, 2, false)), sim.sites, obs, &trends);
  bool warned = false;
  for (const auto& w : fm.warnings) warned = warned || w.find("K = 5") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("lrk with every site as a knot matches the full-rank model") {
  SimLayout sim = make_archetype_layout(10, 0, 8, 8, 10);
  SpatialBasisSpec truth;
  truth.kind = BasisKind::FULL;
  const TemporalBasis trends = seasonal_basis(8, 2, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  const RangeMode rm = RangeMode::fixed(20.0);
  const FittedModel lrk = fit(quick(oracle::model_spec(BasisKind::LRK, 18, 2, true, rm)), sim.sites, obs, &trends);
  const FittedModel full = fit(quick(oracle::model_spec(BasisKind::FULL, 0, 2, true, rm)), sim.sites, obs, &trends);
  CHECK(std::abs(lrk.loglik - full.loglik) < 1e-4);
}

TEST_CASE("predictions match the dense conditional Gaussian") {
  std::uint64_t seed = 50;
  for (BasisKind kind : {BasisKind::TPRS, BasisKind::LRK, BasisKind::FULL, BasisKind::NONE}) {
    for (bool nugget : {true, false}) {
      const PredictionCase c = prediction_case(seed++, kind, kind == BasisKind::TPRS || kind == BasisKind::LRK ? 6 : 0, nugget);
      const ModelLayout& L = *c.layout;
      const Predictor pred(c.layout, c.params, c.alpha);
      // Targets: an observed site-period, the same site in every period, and new sites.
      std::vector<Target> targets;
      const Site& first = c.data.sites.at(L.stacked.site_ids[L.stacked.row_site[0]]);
      for (int t = 0; t < 6; ++t) targets.push_back({&first, t});
      for (const auto& s : c.new_sites) targets.push_back({&s, 2});
      targets.push_back({&c.new_sites[0], 5});

      std::vector<oracle::Item> items_t;
      VectorXd mu_t(static_cast<Eigen::Index>(targets.size()));
      for (std::size_t k = 0; k < targets.size(); ++k) {
        items_t.push_back({targets[k].site->coord, targets[k].period});
        mu_t(static_cast<Eigen::Index>(k)) = oracle::target_mean(L, *targets[k].site, targets[k].period, c.alpha);
      }
      const auto items_o = oracle::observation_items(L);
      const oracle::DenseModel dm = oracle::dense_model(L, c.params);
      const VectorXd mu_o = oracle::dense_FX(L) * c.alpha;
      const oracle::Conditional want =
          oracle::conditional(dm.cov(items_o, items_o), dm.cov(items_o, items_t), dm.cov(items_t, items_t), mu_o, mu_t, L.stacked.y);

      VectorXd mean, var;
      pred.conditional(targets, &mean, &var);
      CAPTURE(to_string(kind));
      CAPTURE(nugget);
      CHECK((mean - want.mean).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((var - want.cov.diagonal()).cwiseAbs().maxCoeff() < 1e-6);

      // Conditional covariance is PSD.
      const MatrixXd cross = pred.cross_covariance(targets);
      const MatrixXd cond = pred.target_covariance(targets) - cross.transpose() * pred.factor().solve(cross);
      CHECK((cond - want.cov).cwiseAbs().maxCoeff() < 1e-6);
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cond + cond.transpose()));
      CHECK(eig.eigenvalues().minCoeff() > -1e-8);
      // Never above the marginal variance.
      CHECK((var.array() <= pred.target_covariance(targets).diagonal().array() + 1e-10).all());
    }
  }
}

TEST_CASE("noiseless kriging interpolates the data") {
  PredictionCase c = prediction_case(70, BasisKind::TPRS, 6, true);
  c.params.theta_P = std::vector<double>{0.0, 0.0};
  c.params.theta_V.nugget = 0.0;
  const Predictor pred(c.layout, c.params, c.alpha);
  const ModelLayout& L = *c.layout;
  std::vector<Target> targets;
  for (std::size_t r = 0; r < L.stacked.rows(); ++r) {
    targets.push_back({&c.data.sites.at(L.stacked.site_ids[L.stacked.row_site[r]]), L.stacked.row_period[r]});
  }
  VectorXd mean, var;
  pred.conditional(targets, &mean, &var);
  CHECK((mean - L.stacked.y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(var.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("distant targets revert to the mean and the marginal variance") {
  for (BasisKind kind : {BasisKind::FULL, BasisKind::LRK}) {
    const PredictionCase c = prediction_case(71, kind, kind == BasisKind::LRK ? 6 : 0, true);
    const Predictor pred(c.layout, c.params, c.alpha);
    Site far = c.new_sites[0];
    far.coord = {1e7, -1e7};
    const std::vector<Target> targets{{&far, 1}, {&far, 4}};
    VectorXd mean, var;
    pred.conditional(targets, &mean, &var);
    CHECK((mean - pred.target_mean(targets)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((var - pred.target_covariance(targets).diagonal()).cwiseAbs().maxCoeff() < 1e-6);
    if (kind == BasisKind::FULL) {
      const auto& p = c.params;
      for (int k = 0; k < 2; ++k) {
        const int t = targets[k].period;
        double marginal = p.theta_V.partial_sill + p.theta_V.nugget;
        for (int j = 0; j < 2; ++j) {
          const double f = c.layout->trends(t, j);
          marginal += f * f * (p.theta_B[j].partial_sill + (*p.theta_P)[j]);
        }
        CHECK(var(k) == doctest::Approx(marginal).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("kriging weights do not depend on the data") {
  PredictionCase c = prediction_case(72, BasisKind::LRK, 6, true);
  auto layout2 = std::make_shared<ModelLayout>(*c.layout);
  Rng rng(5);
  for (auto& v : layout2->stacked.y) v = 3.0 + rng.normal();
  const Predictor p1(c.layout, c.params, c.alpha);
  const Predictor p2(layout2, c.params, c.alpha);
  auto layout3 = std::make_shared<ModelLayout>(*c.layout);
  const double a = 0.7, b = -1.3;
  // Affine in y: combinations whose weights sum to one carry over to the means.
  const VectorXd fx_alpha = c.layout->FX * c.alpha;
  layout3->stacked.y = a * c.layout->stacked.y + b * layout2->stacked.y + (1.0 - a - b) * fx_alpha;
  const Predictor p3(layout3, c.params, c.alpha);

  std::vector<Target> targets;
  for (const auto& s : c.new_sites) targets.push_back({&s, 3});
  VectorXd m1, m2, m3;
  p1.conditional(targets, &m1, nullptr);
  p2.conditional(targets, &m2, nullptr);
  p3.conditional(targets, &m3, nullptr);
  const VectorXd mu = p1.target_mean(targets);
  CHECK((m3 - (a * m1 + b * m2 + (1.0 - a - b) * mu)).cwiseAbs().maxCoeff() < 1e-9);
  const MatrixXd w = p1.kriging_weights(targets);
  CHECK((w - p2.kriging_weights(targets)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m2 - m1 - w.transpose() * (layout2->stacked.y - c.layout->stacked.y)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("prediction requests") {
  const PredictionCase c = prediction_case(73, BasisKind::TPRS, 6, true);
  const Predictor pred(c.layout, c.params, c.alpha);
  PredictionRequest req;
  req.sites = {c.new_sites[0], c.data.sites[0]};
  req.periods = {{0, 2}, {1}};
  const PredictionResult r = pred.predict(req);
  REQUIRE(r.points.size() == 3);
  REQUIRE(r.lta.size() == 2);
  CHECK(r.lta[0].lta_native ==
        doctest::Approx(0.5 * (std::exp(r.points[0].mean) + std::exp(r.points[1].mean))).epsilon(1e-14));
  CHECK(r.lta[1].lta_native == doctest::Approx(std::exp(r.points[2].mean)).epsilon(1e-14));

  req.lta_all_periods = true;
  const PredictionResult all = pred.predict(req);
  CHECK(all.lta[1].lta_native != r.lta[1].lta_native);

  PredictionRequest late = req;
  late.periods = {{0}, {6}};
  bool named = false;
  try {
    pred.predict(late);
  } catch (const InputError& e) {
    named = std::string(e.what()).find("period 6") != std::string::npos;
  }
  CHECK(named);

  PredictionRequest bad = req;
  bad.sites[0].covariates = VectorXd::Zero(3);
  CHECK_THROWS_AS(pred.predict(bad), InputError);
}

TEST_CASE("long-term averages") {
  const std::vector<double> constant(8, 1.25);
  const std::vector<int> some{0, 3, 7};
  CHECK(long_term_average(constant, some) == doctest::Approx(std::exp(1.25)).epsilon(1e-15));
  const std::vector<double> two{std::log(10.0), std::log(20.0)};
  const std::vector<int> both{0, 1};
  CHECK(long_term_average(two, both) == doctest::Approx(15.0).epsilon(1e-14));
  Rng rng(6);
  std::vector<double> series(30);
  for (auto& v : series) v = rng.normal();
  std::vector<int> obs;
  double sum = 0.0;
  for (int t = 0; t < 30; t += 4) {
    obs.push_back(t);
    sum += std::exp(series[static_cast<std::size_t>(t)]);
  }
  CHECK(std::abs(long_term_average(series, obs) - sum / static_cast<double>(obs.size())) < 1e-12);
  CHECK_THROWS_AS(long_term_average(series, std::vector<int>{}), InputError);
}

TEST_CASE("fitted model predicts only on its own data") {
  SimLayout sim = make_archetype_layout(10, 0, 5, 8, 12);
  SpatialBasisSpec truth;
  truth.kind = BasisKind::NONE;
  const TemporalBasis trends = seasonal_basis(8, 2, sim.anchor_day);
  const ObservationSet obs = simulate(sim, truth, trends);
  const FittedModel fm = fit(quick(oracle::model_spec(BasisKind::TPRS, 5, 2, true)), sim.sites, obs, &trends);
  CHECK_NOTHROW(make_predictor(fm, sim.sites, obs));
  const ObservationSet fewer = obs.filter([](const Observation& o) { return o.period > 0; });
  CHECK_THROWS_AS(make_predictor(fm, sim.sites, fewer), InputError);
}
