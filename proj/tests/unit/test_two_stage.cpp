#include "rgp/error.hpp"
#include "rgp/simulate.hpp"
#include "rgp/two_stage.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rgp;

namespace {

SimulationConfig stage_config(double sigma2_e, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.phi = 1.0;
  cfg.n_genotypes = 50;
  cfg.n_markers = 10;
  cfg.block_layout = std::vector<Index>(10, 5);
  cfg.sigma2_g = 1.0;
  cfg.sigma2_b = 1.0;
  cfg.sigma2_e = sigma2_e;
  cfg.seed = seed;
  return cfg;
}

/// Genotype means phi + g_i in dataset genotype order.
VectorXd true_means(const Simulation& sim) {
  const auto& ds = sim.dataset;
  VectorXd mu(ds.n_genotypes());
  for (Index g = 0; g < ds.n_genotypes(); ++g) {
    const auto& label = ds.genotype_labels[static_cast<std::size_t>(g)];
    const Index i = std::stol(label.substr(1)) - 1;
    mu(g) = sim.truth.phi + sim.truth.genotypic_values(i);
  }
  return mu;
}

double mean_abs_error(const VectorXd& a, const VectorXd& b) { return (a - b).cwiseAbs().mean(); }

}  // namespace

TEST_CASE("design for two observations of two genotypes") {
  ObservationTable t;
  t.ids = {"a1", "b1", "a2", "b2"};
  t.replicate = {"1", "1", "2", "2"};
  t.block = {"x", "x", "y", "y"};
  t.genotype = {"a", "b", "a", "b"};
  t.y = {1, 2, 3, 4};
  t.markers = MatrixXd(4, 2);
  t.markers << 0, 1, 1, 1, 0, 1, 1, 1;
  const auto ds = assemble_dataset(t);
  const auto d = build_two_stage_design(ds);
  REQUIRE(d.eta.rows() == 4);
  REQUIRE(d.eta.cols() == 2);
  CHECK(d.eta.colwise().sum() == Eigen::RowVector2d(2, 2));
  CHECK((d.eta * d.X1 - ds.Xg).isZero());
  CHECK((d.eta * d.Z1 - ds.Z).isZero());

  t.markers(2, 0) = 1;
  CHECK_THROWS_WITH_AS(build_two_stage_design(assemble_dataset(t)), doctest::Contains("a"), DataError);
}

TEST_CASE("distinct genotypes give an identity incidence") {
  RandomSource rng(51);
  auto ds = test::toy_dataset(rng, 6, 1, 3, 2);
  ObservationTable t;
  t.ids = ds.ids;
  t.replicate.assign(6, "1");
  for (Index i = 0; i < 6; ++i) t.block.push_back(ds.block_labels[static_cast<std::size_t>(ds.block_of[static_cast<std::size_t>(i)])]);
  t.y.assign(ds.y.data(), ds.y.data() + 6);
  t.markers = ds.Xg;
  const auto own = assemble_dataset(t);
  const auto d = build_two_stage_design(own);
  CHECK(d.eta.isIdentity());
  CHECK(d.Z1 == own.Z);
  CHECK(d.X1 == own.Xg);
}

TEST_CASE("noiseless stage one interpolates the genotype means") {
  const auto sim = simulate(stage_config(1.0, 3));
  auto ds = sim.dataset;
  const auto d = build_two_stage_design(ds);
  const VectorXd mu0 = true_means(sim);
  ds.y = d.eta * mu0;
  const auto s1 = stage_one_fit(ds, d, RobustFitConfig{});
  CHECK((s1.mu_hat - mu0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stage one error shrinks with the residual variance") {
  double err[3] = {0, 0, 0};
  const double s2e[3] = {25.0, 1.0, 0.04};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (int k = 0; k < 3; ++k) {
      const auto sim = simulate(stage_config(s2e[k], seed));
      const auto d = build_two_stage_design(sim.dataset);
      const auto s1 = stage_one_fit(sim.dataset, d, RobustFitConfig{});
      err[k] += mean_abs_error(s1.mu_hat, true_means(sim));
    }
  }
  CHECK(err[0] > err[1]);
  CHECK(err[1] > err[2]);
}

// Shifting whole blocks moves every residual in the block together, so the
// shift is absorbed by the block effects and observation weights stay near 1.
TEST_CASE("stage one absorbs contaminated blocks into block effects") {
  RobustFitConfig plain;
  plain.huber_k = 1e12;
  double robust = 0.0, ordinary = 0.0;
  int separated = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto sim = simulate(stage_config(1.0, seed));
    const auto c = contaminate(sim.dataset, ContaminationScheme::block(), 1.0, seed + 1000);
    const auto d = build_two_stage_design(c.dataset);
    const VectorXd mu0 = true_means(sim);
    const auto s1 = stage_one_fit(c.dataset, d, RobustFitConfig{});
    robust += mean_abs_error(s1.mu_hat, mu0);
    ordinary += mean_abs_error(stage_one_fit(c.dataset, d, plain).mu_hat, mu0);
    std::vector<bool> hit(10, false);
    for (Index i : c.indices) hit[static_cast<std::size_t>(c.dataset.block_of[static_cast<std::size_t>(i)])] = true;
    double lo = 1e300, hi = -1e300;
    for (Index b = 0; b < 10; ++b) {
      if (hit[static_cast<std::size_t>(b)]) {
        lo = std::min(lo, s1.u_b_hat(b));
      } else {
        hi = std::max(hi, s1.u_b_hat(b));
      }
    }
    if (lo > hi) ++separated;
  }
  CHECK(std::abs(robust - ordinary) < 0.05 * ordinary);
  CHECK(separated >= 95);
}

TEST_CASE("genotype confounded with a block is flagged") {
  ObservationTable t;
  for (int k = 1; k <= 2; ++k) {
    for (int g = 0; g < 4; ++g) {
      t.ids.push_back("g" + std::to_string(g) + "_" + std::to_string(k));
      t.replicate.push_back(std::to_string(k));
      t.block.push_back(g == 0 ? "solo" : "shared");
      t.genotype.push_back("g" + std::to_string(g));
      t.y.push_back(static_cast<double>(g + k));
    }
  }
  t.markers = MatrixXd::Zero(8, 1);
  const auto ds = assemble_dataset(t);
  CHECK_THROWS_WITH_AS(stage_one_fit(ds, build_two_stage_design(ds), RobustFitConfig{}),
                       doctest::Contains("g0"), DataError);
}

TEST_CASE("stage two with no marker signal recovers the intercept") {
  auto cfg = stage_config(1.0, 8);
  cfg.sigma2_g = 0.0;
  const auto sim = simulate(cfg);
  const auto d = build_two_stage_design(sim.dataset);
  RandomSource rng(9);
  StageOneResult s1;
  s1.mu_hat = VectorXd::Constant(d.eta.cols(), 2.5) + 1e-6 * test::random_vector(rng, d.eta.cols());
  s1.u_b_hat = VectorXd::Zero(sim.dataset.n_blocks());
  s1.sigma2_e = 1.0;
  StageTwoConfig st;
  st.dpd.alpha = 0.5;
  const auto fit = stage_two_fit(sim.dataset, d, s1, st);
  CHECK(fit.gamma_hat(0) == doctest::Approx(2.5).epsilon(1e-3));
  CHECK(fit.variances.sigma2_g < 1e-6);
}

TEST_CASE("two-stage pipelines report both stages") {
  const auto sim = simulate(stage_config(2.0, 11));
  for (auto method : {StageTwoMethod::Mdpde, StageTwoMethod::Huber, StageTwoMethod::Classical}) {
    StageTwoConfig st;
    st.method = method;
    st.dpd.alpha = 1.0;
    const auto fit = two_stage_fit(sim.dataset, RobustFitConfig{}, st);
    CHECK(fit.stage_one.has_value());
    CHECK(fit.heritability >= 0.0);
    CHECK(fit.heritability <= 1.0);
    CHECK(fit.fitted.size() == sim.dataset.n_obs());
    CHECK(fit.effects.u_g.size() == sim.dataset.n_markers());
  }
}
