#include <cmath>
#include <random>

#include "doctest.h"
#include "error.hpp"
#include "linalg.hpp"

using namespace hcm;

namespace {

CsrMatrix from_dense(const Eigen::MatrixXd& d) {
  TripletBuilder tb(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) tb.add(static_cast<std::size_t>(i), static_cast<std::size_t>(j), d(i, j));
  return tb.build();
}

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = nd(rng);
  return b * b.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

// Path-graph Laplacian on n nodes.
CsrMatrix path_laplacian(std::size_t n) {
  TripletBuilder tb(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    tb.add(i, i, 1.0);
    tb.add(i + 1, i + 1, 1.0);
    tb.add(i, i + 1, -1.0);
    tb.add(i + 1, i, -1.0);
  }
  return tb.build();
}

}  // namespace

TEST_CASE("triplet builder sums duplicates and sorts columns") {
  TripletBuilder tb(3);
  tb.add(0, 2, 1.0);
  tb.add(0, 0, 2.0);
  tb.add(0, 2, 0.5);
  tb.add(2, 1, -1.0);
  const CsrMatrix a = tb.build();
  CHECK(a.nnz() == 3);
  CHECK(a.at(0, 2) == doctest::Approx(1.5));
  CHECK(a.at(0, 0) == 2.0);
  CHECK(a.at(1, 1) == 0.0);
  CHECK(a.col[0] == 0);
  CHECK(a.col[1] == 2);
  const RealVector y = a * RealVector{1, 2, 3};
  CHECK(y[0] == doctest::Approx(6.5));
  CHECK(y[2] == doctest::Approx(-2.0));
}

TEST_CASE("cg on a 2x2 diagonal system") {
  TripletBuilder tb(2);
  tb.add(0, 0, 2.0);
  tb.add(1, 1, 4.0);
  const auto r = cg_solve(tb.build(), RealVector{2.0, 4.0}, {1e-14, 0, Preconditioner::None});
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(r.iterations <= 2);
}

TEST_CASE("cg matches a dense LU solve on a random 50x50 SPD matrix") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd d = random_spd(50, rng);
  Eigen::VectorXd b = Eigen::VectorXd::Random(50);
  const Eigen::VectorXd ref = d.partialPivLu().solve(b);
  for (auto pc : {Preconditioner::None, Preconditioner::Jacobi}) {
    const auto r = cg_solve(from_dense(d), std::span<const double>(b.data(), 50), {1e-12, 0, pc});
    double err = 0.0;
    for (int i = 0; i < 50; ++i) err = std::max(err, std::abs(r.x[static_cast<std::size_t>(i)] - ref(i)));
    CHECK(err < 1e-9 * ref.cwiseAbs().maxCoeff());
    CHECK(r.residual <= 1e-12);
  }
}

TEST_CASE("cg edge cases") {
  const CsrMatrix a = path_laplacian(3);
  SUBCASE("zero right-hand side returns zero without iterating") {
    TripletBuilder tb(2);
    tb.add(0, 0, 1.0);
    tb.add(1, 1, 1.0);
    const auto r = cg_solve(tb.build(), RealVector{0.0, 0.0});
    CHECK(r.iterations == 0);
    CHECK(r.x == RealVector{0.0, 0.0});
  }
  SUBCASE("indefinite matrix is rejected") {
    TripletBuilder tb(2);
    tb.add(0, 0, 1.0);
    tb.add(1, 1, 1.0);
    tb.add(0, 1, 3.0);
    tb.add(1, 0, 3.0);
    try {
      cg_solve(tb.build(), RealVector{1.0, -1.0}, {1e-12, 0, Preconditioner::None});
      FAIL("expected NotSpd");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotSpd);
    }
  }
  SUBCASE("non-positive diagonal is rejected with Jacobi") {
    TripletBuilder tb(2);
    tb.add(0, 0, -1.0);
    tb.add(1, 1, 1.0);
    CHECK_THROWS_AS(cg_solve(tb.build(), RealVector{1.0, 1.0}), SolverError);
  }
  SUBCASE("iteration cap raises NonConvergence with history") {
    std::mt19937_64 rng(3);
    const CsrMatrix m = from_dense(random_spd(40, rng));
    RealVector b(40, 1.0);
    try {
      cg_solve(m, b, {1e-14, 2, Preconditioner::None});
      FAIL("expected NonConvergence");
    } catch (const SolverError& e) {
      CHECK(e.code() == ErrorCode::NonConvergence);
      CHECK(e.residual_history().size() == 2);
    }
  }
  SUBCASE("wrong right-hand side length") {
    CHECK_THROWS_AS(cg_solve(a, RealVector{1.0}), Error);
  }
}

TEST_CASE("solve_mean_zero reproduces the pseudoinverse of a 3-node path Laplacian") {
  const CsrMatrix a = path_laplacian(3);
  // L^+ for the path 0-1-2.
  Eigen::Matrix3d lp;
  lp << 5.0, -1.0, -4.0, -1.0, 2.0, -1.0, -4.0, -1.0, 5.0;
  lp /= 9.0;
  const RealVector b{1.0, 0.0, -1.0};
  const RealVector w{1.0, 1.0, 1.0};
  const auto r = solve_mean_zero(a, b, w, {1e-14, 0, Preconditioner::Jacobi});
  const Eigen::Vector3d ref = lp * Eigen::Vector3d(1.0, 0.0, -1.0);
  for (int i = 0; i < 3; ++i) CHECK(r.x[static_cast<std::size_t>(i)] == doctest::Approx(ref(i)).epsilon(1e-12));
  CHECK(r.defect == doctest::Approx(0.0));
}

TEST_CASE("solve_mean_zero projects incompatible data and honours weights") {
  const CsrMatrix a = path_laplacian(4);
  const RealVector b{1.0, 1.0, 0.0, 0.0};
  const RealVector w{1.0, 2.0, 3.0, 4.0};
  const auto r = solve_mean_zero(a, b, w);
  CHECK(r.defect == doctest::Approx(1.0));  // |sum b| / sqrt(n) = 2 / 2
  CHECK(std::abs(dot(w, r.x)) < 1e-12);
  RealVector pb = b;
  for (double& v : pb) v -= 0.5;
  const RealVector ax = a * r.x;
  for (std::size_t i = 0; i < 4; ++i) CHECK(ax[i] == doctest::Approx(pb[i]).epsilon(1e-9));
  CHECK_THROWS_AS(solve_mean_zero(a, b, RealVector{1.0, 0.0, 1.0, 1.0}), Error);
}

TEST_CASE("spd_check and dense systems") {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd d = random_spd(12, rng);
  const auto rep = spd_check(from_dense(d));
  CHECK(rep.symmetric);
  REQUIRE(rep.min_eigenvalue.has_value());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
  // Inverse power iteration estimate.
  CHECK(*rep.min_eigenvalue == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-3));

  Eigen::MatrixXd asym = d;
  asym(0, 1) += 1.0;
  CHECK_FALSE(spd_check(from_dense(asym), false).symmetric);

  DenseSpdSystem sys(d);
  Eigen::VectorXd b = Eigen::VectorXd::Random(12);
  const RealVector x = sys.solve(std::span<const double>(b.data(), 12));
  const Eigen::VectorXd ref = d.ldlt().solve(b);
  for (int i = 0; i < 12; ++i) CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(ref(i)).epsilon(1e-10));
  CHECK(sys.min_eigenvalue() == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-10));

  Eigen::MatrixXd sing = Eigen::MatrixXd::Ones(3, 3);
  CHECK_THROWS_AS(DenseSpdSystem{sing}, Error);
}
