#include "rgp/error.hpp"
#include "rgp/shrinkage.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <map>

using namespace rgp;

namespace {

PhenotypeDataset single_replicate(const VectorXd& y, const MatrixXd& markers) {
  ObservationTable t;
  for (Index i = 0; i < y.size(); ++i) {
    t.ids.push_back("o" + std::to_string(i));
    t.replicate.push_back("1");
    t.block.push_back("b");
    t.y.push_back(y(i));
  }
  t.markers = markers;
  t.coding = MarkerCoding::Ternary;
  return assemble_dataset(t);
}

VarianceComponents base_vc(double s2g, double s2e) {
  VarianceComponents vc;
  vc.sigma2_g = s2g;
  vc.sigma2_e = s2e;
  return vc;
}

/// Sums of squares written out per group.
struct Hand {
  double mqm, mqe, sum_n2;
};

Hand hand_anova(const VectorXd& y, const VectorXd& x) {
  std::map<double, std::vector<double>> groups;
  for (Index i = 0; i < y.size(); ++i) groups[x(i)].push_back(y(i));
  const double grand = y.mean();
  double ssb = 0, ssw = 0, n2 = 0;
  for (const auto& [code, v] : groups) {
    double m = 0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    ssb += static_cast<double>(v.size()) * (m - grand) * (m - grand);
    for (double e : v) ssw += (e - m) * (e - m);
    n2 += static_cast<double>(v.size() * v.size());
  }
  const double k = static_cast<double>(groups.size());
  const double N = static_cast<double>(y.size());
  return {ssb / (k - 1), ssw / (N - k), n2};
}

}  // namespace

TEST_CASE("ANOVA hand cases") {
  VectorXd y(4);
  y << 1, 1, 3, 3;
  MatrixXd x(4, 1);
  x << 0, 0, 1, 1;
  const auto a = anova_per_marker(single_replicate(y, x), 0);
  CHECK(a.mqe == 0.0);
  CHECK(a.mqm == doctest::Approx(4.0).epsilon(1e-14));

  const auto c = anova_per_marker(single_replicate(VectorXd::Constant(4, 2.0), x), 0);
  CHECK(c.mqm == 0.0);
  CHECK(c.mqe == 0.0);

  const auto flat = anova_per_marker(single_replicate(y, MatrixXd::Zero(4, 1)), 0);
  CHECK(flat.constant);
  CHECK_THROWS_AS(anova_per_marker(single_replicate(y, x), 3), DataError);
}

TEST_CASE("ANOVA matches brute-force sums of squares") {
  RandomSource rng(11);
  const VectorXd y = test::random_vector(rng, 30);
  MatrixXd x(30, 1);
  for (Index i = 0; i < 30; ++i) x(i, 0) = static_cast<double>(rng.index(3)) - 1.0;
  const auto a = anova_per_marker(single_replicate(y, x), 0);
  const auto h = hand_anova(y, x.col(0));
  CHECK(a.mqm == doctest::Approx(h.mqm).epsilon(1e-12));
  CHECK(a.mqe == doctest::Approx(h.mqe).epsilon(1e-12));
  CHECK(a.ssb + a.ssw == doctest::Approx(a.sst).epsilon(1e-12));
}

TEST_CASE("identical markers share equal shrinkage") {
  RandomSource rng(12);
  const Index p = 4;
  VectorXd col(20);
  for (Index i = 0; i < 20; ++i) col(i) = i % 2;
  MatrixXd m(20, p);
  for (Index j = 0; j < p; ++j) m.col(j) = col;
  VectorXd y = 2.0 * col + 0.3 * test::random_vector(rng, 20);
  const auto vc = base_vc(0.4, 1.3);
  const auto r = rmla_shrinkage(single_replicate(y, m), vc);
  const double s2u = static_cast<double>(p) * vc.sigma2_g;
  for (Index j = 0; j < p; ++j) {
    CHECK(r.lambda(j) == doctest::Approx(static_cast<double>(p) * vc.sigma2_e / s2u).epsilon(1e-12));
  }
}

TEST_CASE("RMLA walk-through on N = 40, p = 3") {
  RandomSource rng(13);
  MatrixXd m(40, 3);
  for (Index i = 0; i < 40; ++i)
    for (Index j = 0; j < 3; ++j) m(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  VectorXd y = 3.0 * m.col(0) + 1.0 * m.col(1) + test::random_vector(rng, 40);
  const auto ds = single_replicate(y, m);
  const auto vc = base_vc(0.8, 1.1);
  const auto r = rmla_shrinkage(ds, vc);

  VectorXd star(3);
  for (Index j = 0; j < 3; ++j) {
    const auto h = hand_anova(y, m.col(j));
    star(j) = (h.mqm - h.mqe) / (0.5 * (40.0 - h.sum_n2 / 40.0));
  }
  const double mean_pos = star.cwiseMax(0.0).mean();
  star = star.cwiseMax(1e-8 * mean_pos);
  for (Index j = 0; j < 3; ++j) {
    const double expected = (vc.sigma2_e / (3.0 * vc.sigma2_g)) * star.sum() / star(j);
    CHECK(r.lambda(j) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.sigma2_star(j) == doctest::Approx(star(j)).epsilon(1e-12));
  }
  CHECK(r.lambda(0) < r.lambda(1));
}

TEST_CASE("shrinkage is inversely proportional to the moment estimate") {
  RandomSource rng(14);
  MatrixXd m(40, 2);
  for (Index i = 0; i < 40; ++i) {
    m(i, 0) = i % 2;
    m(i, 1) = (i / 2) % 2;
  }
  const VectorXd y = 2.0 * m.col(0) + 1.0 * m.col(1) + 0.5 * test::random_vector(rng, 40);
  const auto r = rmla_shrinkage(single_replicate(y, m), base_vc(1, 1));
  CHECK(r.lambda(0) / r.lambda(1) == doctest::Approx(r.sigma2_star(1) / r.sigma2_star(0)).epsilon(1e-12));
}

TEST_CASE("no marker signal is flagged") {
  VectorXd y(6);
  y << 1, 1, 1, 1, 1, 1;
  MatrixXd m(6, 2);
  m << 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0;
  const auto r = rmla_shrinkage(single_replicate(y, m), base_vc(1, 1));
  CHECK(r.no_signal);
  CHECK(r.lambda(0) == r.lambda(1));
}

TEST_CASE("RMLV shrinks the large-effect marker least") {
  RandomSource rng(15);
  MatrixXd m(60, 4);
  for (Index i = 0; i < 60; ++i)
    for (Index j = 0; j < 4; ++j) m(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  VectorXd u(4);
  u << 0.05, 5.0, 0.05, 0.05;
  const VectorXd y = m * u + test::random_vector(rng, 60);
  const auto r = rmlv_fit(single_replicate(y, m), base_vc(1, 1));
  Index arg = 0;
  r.lambda.minCoeff(&arg);
  CHECK(arg == 1);
  CHECK(r.vc.sigma2_e > 0.0);
  CHECK(r.vc.sigma2_g_per_marker->size() == 4);
}

// Per-marker variances keep a positive fixed point for markers whose chance
// association exceeds the noise level, so only part of the norm vanishes.
TEST_CASE("RMLV on pure noise shrinks toward zero") {
  RandomSource rng(16);
  double sum_rmlv = 0, sum_ols = 0;
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd m(60, 4);
    for (Index i = 0; i < 60; ++i)
      for (Index j = 0; j < 4; ++j) m(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const VectorXd y = test::random_vector(rng, 60);
    const auto ds = single_replicate(y, m);
    RmlvOptions opts;
    opts.max_iter = 500;
    const auto r = rmlv_fit(ds, base_vc(1, 1), opts);
    sum_rmlv += r.solution.u_hat.head(4).norm();
    MatrixXd full(60, 5);
    full << VectorXd::Ones(60), m;
    sum_ols += full.colPivHouseholderQr().solve(y).tail(4).norm();
  }
  CHECK(sum_rmlv < 0.6 * sum_ols);
}

TEST_CASE("RMLV rejects invalid options") {
  RandomSource rng(17);
  const auto ds = test::toy_dataset(rng, 10, 2, 3, 2);
  RmlvOptions opts;
  opts.max_iter = 0;
  CHECK_THROWS_AS(rmlv_fit(ds, base_vc(1, 1), opts), DataError);
}
