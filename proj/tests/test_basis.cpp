#include "doctest.h"

#include "oracles.hpp"
#include "rrst/basis.hpp"
#include "rrst/geometry.hpp"
#include "rrst/rng.hpp"

#include <numeric>

using namespace rrst;

namespace {

std::vector<Point> random_points(Rng& rng, int n, double side = 50.0) {
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(0.0, side), rng.uniform(0.0, side)});
  return pts;
}

MatrixXd corr(const std::vector<Point>& a, const std::vector<Point>& b, double range) {
  MatrixXd c(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c(i, j) = std::exp(-oracle::dist(a[i], b[j]) / range);
  return c;
}

// Least-squares fitted values of y on the columns of A.
VectorXd fitted(const MatrixXd& A, const VectorXd& y) {
  return A * A.colPivHouseholderQr().solve(y);
}

}  // namespace

TEST_CASE("thin plate radial function sign structure") {
  CHECK(tprs_eta(1.0) == 0.0);
  CHECK(tprs_eta(0.0) == 0.0);
  for (double r : {0.01, 0.3, 0.7, 0.99}) CHECK(tprs_eta(r) < 0.0);
  for (double r : {1.01, 2.0, 50.0}) CHECK(tprs_eta(r) > 0.0);
  CHECK(tprs_eta(2.5) == doctest::Approx(oracle::eta(2.5)).epsilon(1e-14));
}

TEST_CASE("lrk with knots at every site reproduces the full correlation") {
  Rng rng(4);
  const auto pts = random_points(rng, 15);
  const SpatialBasis b = lrk_basis(pts, KnotSet{pts, KnotSource::MONITOR_SITES}, 12.0);
  const MatrixXd approx = b.penalized * b.penalized.transpose();
  CHECK((approx - corr(pts, pts, 12.0)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.unpenalized.cols() == 0);
}

TEST_CASE("lrk single knot at a site") {
  Rng rng(9);
  const auto pts = random_points(rng, 7);
  const SpatialBasis b = lrk_basis(pts, KnotSet{{pts[3]}, KnotSource::MONITOR_SITES}, 10.0);
  REQUIRE(b.penalized.cols() == 1);
  CHECK(b.penalized(3, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("lrk approximation never exceeds the full variance") {
  Rng rng(19);
  for (int rep = 0; rep < 5; ++rep) {
    const auto pts = random_points(rng, 20);
    const KnotSet ks = select_knots(pts, 5, 1);
    const double range = rng.uniform(5.0, 30.0);
    const SpatialBasis b = lrk_basis(pts, ks, range);
    // Dense oracle: Z Omega~^{-1} Z^T with an explicit inverse.
    const MatrixXd Z = corr(pts, ks.knots, range);
    const MatrixXd Om = corr(ks.knots, ks.knots, range);
    const MatrixXd dense = Z * Om.inverse() * Z.transpose();
    CHECK((b.penalized * b.penalized.transpose() - dense).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 0; i < 20; ++i) CHECK(dense(i, i) <= 1.0 + 1e-8);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(dense);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("lrk error shrinks with nested knot sets") {
  Rng rng(23);
  const auto pts = random_points(rng, 25);
  std::vector<std::size_t> order(25);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const MatrixXd full = corr(pts, pts, 15.0);
  double prev = 1e300;
  for (int K = 1; K <= 25; K += 3) {
    std::vector<Point> knots;
    for (int k = 0; k < K; ++k) knots.push_back(pts[order[k]]);
    const SpatialBasis b = lrk_basis(pts, KnotSet{knots, KnotSource::MONITOR_SITES}, 15.0);
    const double err = (full - b.penalized * b.penalized.transpose()).norm();
    CHECK(err <= prev + 1e-9);
    prev = err;
  }
}

TEST_CASE("lrk is translation invariant and rejects coincident knots") {
  Rng rng(27);
  auto pts = random_points(rng, 12);
  const KnotSet ks = select_knots(pts, 5, 3);
  const MatrixXd a = lrk_basis(pts, ks, 9.0).penalized;
  std::vector<Point> moved = pts;
  KnotSet moved_knots = ks;
  for (auto& p : moved) p = {p.x + 1000.0, p.y - 250.0};
  for (auto& p : moved_knots.knots) p = {p.x + 1000.0, p.y - 250.0};
  CHECK((lrk_basis(moved, moved_knots, 9.0).penalized - a).cwiseAbs().maxCoeff() < 1e-9);

  KnotSet dup{{pts[0], pts[0]}, KnotSource::MONITOR_SITES};
  CHECK_THROWS(lrk_basis(pts, dup, 9.0));
  CHECK_THROWS_AS(lrk_basis(pts, ks, 0.0), InputError);
}

TEST_CASE("lrk evaluation at training sites matches the basis") {
  Rng rng(28);
  const auto pts = random_points(rng, 14);
  const KnotSet ks = select_knots(pts, 6, 3);
  const LrkBasis lrk(ks.knots, 11.0);
  CHECK((lrk.penalized_at(pts) - lrk_basis(pts, ks, 11.0).penalized).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tprs constraint holds for every rank") {
  Rng rng(31);
  for (int rep = 0; rep < 4; ++rep) {
    const auto pts = random_points(rng, 18);
    for (int K = 4; K <= 18; K += 2) {
      const TprsBasis b(pts, K);
      CHECK(b.penalized().cols() == K - 3);
      CHECK((b.polynomial().transpose() * b.penalized()).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("tprs penalty reparameterization") {
  Rng rng(37);
  const auto pts = random_points(rng, 16);
  const TprsBasis b(pts, 9);
  const MatrixXd& U = b.eigenvectors();
  const VectorXd& D = b.eigenvalues();
  const MatrixXd& W = b.null_space();
  const MatrixXd S = W.transpose() * D.asDiagonal() * W;  // Wood penalty matrix
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
  const MatrixXd S_half = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() *
                          eig.eigenvectors().transpose();
  CHECK((b.penalty_inverse_sqrt() * S_half - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);

  const MatrixXd& T = b.polynomial();
  const MatrixXd proj = MatrixXd::Identity(16, 16) - T * (T.transpose() * T).inverse() * T.transpose();
  for (int r = 0; r < 5; ++r) {
    VectorXd zeta(6);
    for (int i = 0; i < 6; ++i) zeta(i) = rng.normal();
    const VectorXd delta = S_half * zeta;
    CHECK(delta.squaredNorm() == doctest::Approx(zeta.dot(S * zeta)).epsilon(1e-10));
    const VectorXd direct = proj * (U * D.asDiagonal() * W * zeta);
    CHECK((b.penalized() * delta - direct).cwiseAbs().maxCoeff() < 1e-8);
  }
  // Eigenvalues are kept in order of decreasing magnitude.
  for (int i = 1; i < D.size(); ++i) CHECK(std::abs(D(i - 1)) >= std::abs(D(i)));
}

TEST_CASE("tprs at full rank matches the bordered thin plate system") {
  Rng rng(41);
  const auto pts = random_points(rng, 12);
  const TprsBasis b(pts, 12);
  // The oracle works in the same standardized coordinates so the penalties agree.
  std::vector<Point> std_pts;
  for (const auto& p : pts) std_pts.push_back({(p.x - b.center().x) / b.scale(), (p.y - b.center().y) / b.scale()});
  VectorXd y(12);
  for (int i = 0; i < 12; ++i) y(i) = std::sin(std_pts[i].x) + std_pts[i].y * std_pts[i].y + 0.1 * rng.normal();
  MatrixXd A(12, 12);
  A << b.polynomial(), b.penalized();
  for (double lambda : {1e-9, 1e-2, 1.0}) {
    MatrixXd pen = MatrixXd::Zero(12, 12);
    pen.bottomRightCorner(9, 9) = lambda * MatrixXd::Identity(9, 9);
    const VectorXd coef = (A.transpose() * A + pen).ldlt().solve(A.transpose() * y);
    const VectorXd ours = A * coef;
    CHECK((ours - oracle::thin_plate_fit(std_pts, y, lambda)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("tprs fitted values are translation invariant") {
  Rng rng(43);
  const auto pts = random_points(rng, 20);
  VectorXd y(20);
  for (auto& v : y) v = rng.normal();
  std::vector<Point> moved = pts;
  for (auto& p : moved) p = {p.x + 5000.0, p.y + 321.0};
  for (int K : {5, 10, 20}) {
    const SpatialBasis a = tprs_basis(pts, K);
    const SpatialBasis c = tprs_basis(moved, K);
    MatrixXd Aa(20, 1 + a.unpenalized.cols() + a.penalized.cols());
    Aa << VectorXd::Ones(20), a.unpenalized, a.penalized;
    MatrixXd Ac(20, Aa.cols());
    Ac << VectorXd::Ones(20), c.unpenalized, c.penalized;
    CHECK((fitted(Aa, y) - fitted(Ac, y)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("tprs evaluation at training sites reproduces the training rows") {
  Rng rng(47);
  const auto pts = random_points(rng, 15);
  const TprsBasis b(pts, 8);
  CHECK((b.penalized_at(pts) - b.penalized()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((b.unpenalized_at(pts) - b.polynomial().rightCols(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tprs input errors") {
  const std::vector<Point> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}};
  CHECK_THROWS_AS(tprs_basis(line, 4), InputError);
  Rng rng(1);
  const auto pts = random_points(rng, 6);
  CHECK_THROWS_AS(tprs_basis(pts, 3), InputError);
  CHECK_THROWS_AS(tprs_basis(pts, 7), InputError);
}

TEST_CASE("block diagonal basis assembly") {
  Rng rng(53);
  const auto pts = random_points(rng, 10);
  const SpatialBasis b = tprs_basis(pts, 6);
  CHECK(assemble_Z_B(b, 1).isApprox(b.penalized, 0.0));
  const MatrixXd Z2 = assemble_Z_B(b, 2);
  REQUIRE(Z2.rows() == 20);
  REQUIRE(Z2.cols() == 6);
  VectorXd ind = VectorXd::Zero(6);
  ind.head(3).setOnes();
  const VectorXd hit = Z2 * ind;
  CHECK((hit.head(10) - b.penalized.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(hit.tail(10).cwiseAbs().maxCoeff() == 0.0);
  SpatialBasis none;
  CHECK(assemble_Z_B(none, 2).cols() == 0);
  CHECK_THROWS_AS(assemble_Z_B(b, 0), InputError);
}

TEST_CASE("inverse square root drops tiny directions") {
  const MatrixXd a = (MatrixXd(3, 3) << 2, 0, 0, 0, 1, 0, 0, 0, 1e-20).finished();
  int dropped = 0;
  const MatrixXd r = inverse_sqrt_psd(a, 1e-12, &dropped);
  CHECK(dropped == 1);
  CHECK(r(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(r(2, 2) == 0.0);
}

TEST_CASE("range modes") {
  CHECK(RangeMode::parse("est").label() == "est");
  CHECK(RangeMode::parse("fixed:max").resolve(80.0) == 80.0);
  CHECK(RangeMode::parse("fixed:max/4").resolve(80.7) == doctest::Approx(80.7 / 4));
  CHECK(RangeMode::parse("fixed:12.5").resolve(80.0) == 12.5);
  for (const char* s : {"fixed:max", "fixed:max/2", "fixed:max/4", "fixed:max/8", "fixed:3.25", "fixed:max*0.3"}) {
    CHECK(RangeMode::parse(RangeMode::parse(s).label()).label() == RangeMode::parse(s).label());
  }
  CHECK_THROWS_AS(RangeMode::parse("fixed:-1"), InputError);
  CHECK_THROWS_AS(RangeMode::parse("sometimes"), InputError);
  CHECK_THROWS_AS(RangeMode::parse("fixed:max/x"), InputError);
}
