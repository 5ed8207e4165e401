#include "rgp/error.hpp"
#include "rgp/mme.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace rgp;

namespace {

/// Dense Henderson solve by full-pivot LU.
VectorXd dense_henderson(const MatrixXd& Z, const MatrixXd& X, const VectorXd& y, const VectorXd& lambda) {
  const Index L = Z.cols();
  const Index q = X.cols();
  MatrixXd C(L + q, L + q);
  C << Z.transpose() * Z, Z.transpose() * X, X.transpose() * Z,
      X.transpose() * X + MatrixXd(lambda.asDiagonal());
  VectorXd rhs(L + q);
  rhs << Z.transpose() * y, X.transpose() * y;
  return C.fullPivLu().solve(rhs);
}

double rel_err(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace

TEST_CASE("projection centers with an intercept") {
  RandomSource rng(1);
  const VectorXd v = test::random_vector(rng, 9);
  const VectorXd out = projection_apply(MatrixXd::Ones(9, 1), v);
  CHECK((out - (v.array() - v.mean()).matrix()).norm() < 1e-12);
}

TEST_CASE("projection annihilates the column space") {
  RandomSource rng(2);
  const MatrixXd Z = test::random_matrix(rng, 12, 3);
  const VectorXd v = Z * test::random_vector(rng, 3);
  CHECK(projection_apply(Z, v).norm() < 1e-10);
  MatrixXd Zbad(4, 2);
  Zbad << 1, 2, 1, 2, 1, 2, 1, 2;
  CHECK_THROWS_AS(projection_apply(Zbad, VectorXd(VectorXd::Ones(4))), DataError);
}

TEST_CASE("solve_mme matches a dense Henderson solve in both forms") {
  RandomSource rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Index N = 10 + static_cast<Index>(rng.index(15));
    const Index q = 2 + static_cast<Index>(rng.index(30));
    const MatrixXd Z = test::random_matrix(rng, N, 2);
    const MatrixXd X = test::random_matrix(rng, N, q);
    const VectorXd y = test::random_vector(rng, N);
    VectorXd lambda(q);
    for (Index j = 0; j < q; ++j) lambda(j) = 0.1 + 5.0 * rng.uniform();
    const VectorXd ref = dense_henderson(Z, X, y, lambda);
    for (auto form : {SolveForm::Primal, SolveForm::Dual}) {
      const auto sol = solve_mme(Z, X, y, lambda, VectorXd(), form);
      CHECK(rel_err(sol.gamma_hat, ref.head(2)) < 1e-9);
      CHECK(rel_err(sol.u_hat, ref.tail(q)) < 1e-9);
    }
  }
}

TEST_CASE("c_diag is the random-effect diagonal of the inverse") {
  RandomSource rng(4);
  const MatrixXd Z = MatrixXd::Ones(15, 1);
  const MatrixXd X = test::random_matrix(rng, 15, 4);
  const VectorXd lambda = VectorXd::Constant(4, 2.0);
  MatrixXd C(5, 5);
  C << Z.transpose() * Z, Z.transpose() * X, X.transpose() * Z,
      X.transpose() * X + MatrixXd(lambda.asDiagonal());
  const MatrixXd Cinv = C.inverse();
  for (auto form : {SolveForm::Primal, SolveForm::Dual}) {
    const auto sol = solve_mme(Z, X, test::random_vector(rng, 15), lambda, VectorXd(), form);
    CHECK((sol.c_diag - Cinv.diagonal().tail(4)).norm() < 1e-10);
  }
}

TEST_CASE("weighted solve matches the dense weighted system") {
  RandomSource rng(5);
  const MatrixXd Z = test::random_matrix(rng, 14, 2);
  const MatrixXd X = test::random_matrix(rng, 14, 5);
  const VectorXd y = test::random_vector(rng, 14);
  VectorXd w(14);
  for (Index i = 0; i < 14; ++i) w(i) = 0.2 + rng.uniform();
  const VectorXd lambda = VectorXd::Constant(5, 0.7);
  const VectorXd s = w.cwiseSqrt();
  const VectorXd ref = dense_henderson(s.asDiagonal() * Z, s.asDiagonal() * X, s.asDiagonal() * y, lambda);
  const auto sol = solve_mme(Z, X, y, lambda, w);
  CHECK(rel_err(sol.u_hat, ref.tail(5)) < 1e-9);
  CHECK(rel_err(sol.gamma_hat, ref.head(2)) < 1e-9);
}

TEST_CASE("infinite shrinkage gives least squares on Z") {
  RandomSource rng(6);
  const auto ds = test::toy_dataset(rng, 10, 2, 3, 2);
  const auto sol = solve_mme(ds, VectorXd::Constant(5, 1e12));
  CHECK(sol.u_hat.norm() < 1e-8);
  CHECK(sol.gamma_hat(0) == doctest::Approx(ds.y.mean()).epsilon(1e-8));
}

TEST_CASE("ridge_solution agrees with solve_mme") {
  RandomSource rng(7);
  const auto ds = test::toy_dataset(rng, 6, 2, 3, 2);
  VectorXd lambda(5);
  lambda << 0.5, 1.5, 2.5, 3.0, 3.0;
  const auto sol = solve_mme(ds, lambda);
  const auto re = ridge_solution(ds, lambda);
  VectorXd u(5);
  u << re.u_g, re.u_b;
  CHECK(rel_err(u, sol.u_hat) < 1e-8);
  CHECK(rel_err(ridge_solution(ds.Z, stack_design(ds), ds.y, lambda, SolveForm::Dual), sol.u_hat) < 1e-8);
}

TEST_CASE("ridge gives zero when y lies in span(Z)") {
  RandomSource rng(8);
  const MatrixXd Z = test::random_matrix(rng, 10, 2);
  const MatrixXd X = test::random_matrix(rng, 10, 3);
  const VectorXd y = Z * VectorXd::Ones(2);
  CHECK(ridge_solution(Z, X, y, VectorXd::Ones(3)).norm() < 1e-10);
}

TEST_CASE("small shrinkage approaches the unpenalized estimate") {
  RandomSource rng(9);
  const MatrixXd Z = MatrixXd::Ones(20, 1);
  const MatrixXd X = test::random_matrix(rng, 20, 3);
  const VectorXd y = test::random_vector(rng, 20);
  MatrixXd full(20, 4);
  full << Z, X;
  const VectorXd ols = full.colPivHouseholderQr().solve(y);
  const VectorXd u = ridge_solution(Z, X, y, VectorXd::Constant(3, 1e-9));
  CHECK(rel_err(u, ols.tail(3)) < 1e-6);
}

TEST_CASE("breeding values and predictions") {
  RandomSource rng(10);
  const auto ds = test::toy_dataset(rng, 10, 1, 4, 2);
  CHECK(breeding_values(ds, VectorXd::Zero(4)).isZero());
  const VectorXd u = test::random_vector(rng, 4);
  CHECK((breeding_values(ds, u) - ds.Xg * u).norm() < 1e-14);

  auto one = ds;
  one.Xg = ds.Xg.leftCols(1);
  VectorXd c(1);
  c << 2.5;
  CHECK(breeding_values(one, c) == 2.5 * one.Xg.col(0));

  RandomEffects zero{VectorXd::Zero(4), VectorXd::Zero(2)};
  CHECK(predict(ds, VectorXd::Zero(1), zero).isZero());
  VectorXd mean(1);
  mean << ds.y.mean();
  CHECK((predict(ds, mean, zero).array() == ds.y.mean()).all());
  RandomEffects re{u, test::random_vector(rng, 2)};
  const VectorXd ref = ds.Z * mean + ds.Xg * re.u_g + ds.Xb * re.u_b;
  CHECK((predict(ds, mean, re) - ref).norm() < 1e-12);
}

TEST_CASE("robust_cholesky jitters semidefinite matrices and names failures") {
  MatrixXd A(2, 2);
  A << 1, 1, 1, 1;
  int steps = -1;
  const auto llt = robust_cholesky(A, &steps);
  CHECK(llt.info() == Eigen::Success);
  CHECK(steps >= 1);
  MatrixXd B(2, 2);
  B << 1, 0, 0, -5;
  CHECK_THROWS_AS(robust_cholesky(B), NumericError);
}

TEST_CASE("shrinkage_diagonal layout") {
  VectorXd m(2);
  m << 1, 2;
  const VectorXd d = shrinkage_diagonal(m, 3, 7);
  REQUIRE(d.size() == 5);
  CHECK(d(1) == 2);
  CHECK(d(4) == 7);
}
