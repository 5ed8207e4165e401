#include "rgp/error.hpp"
#include "rgp/simulate.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace rgp;

namespace {

SimulationConfig small_config() {
  SimulationConfig cfg;
  cfg.n_genotypes = 50;
  cfg.n_markers = 20;
  cfg.block_layout = std::vector<Index>(5, 10);
  cfg.sigma2_g = 0.5;
  cfg.sigma2_b = 1.0;
  cfg.sigma2_e = 2.0;
  cfg.seed = 77;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("random source variates") {
  RandomSource rng(1);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) REQUIRE(rng.index(7) < 7);
  CHECK(rng.index(1) == 0);
  CHECK(derive_seed(5, 1) != derive_seed(5, 2));
}

TEST_CASE("block layout parsing") {
  const auto ref = reference_block_layout();
  CHECK(ref.size() == 70);
  Index total = 0;
  for (Index s : ref) total += s;
  CHECK(total == 715);
  CHECK(parse_block_layout("5x13, 65x10") == ref);
  CHECK(parse_block_layout("3,4,3") == std::vector<Index>{3, 4, 3});
  CHECK(format_block_layout(ref) == "5x13, 65x10");
  CHECK_THROWS_AS(parse_block_layout("5xq"), DataError);
}

TEST_CASE("config validation names the field") {
  auto cfg = small_config();
  cfg.block_layout = {10, 10};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("block_layout"), DataError);
  cfg = small_config();
  cfg.sigma2_e = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("sigma2_e"), DataError);
  cfg = small_config();
  cfg.marker_maf = 0.7;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("maf"), DataError);
}

TEST_CASE("noise-free simulation returns phi") {
  auto cfg = small_config();
  cfg.sigma2_g = 0.0;
  cfg.sigma2_b = 0.0;
  cfg.sigma2_e = 1e-10;
  cfg.phi = 0.05;
  const auto sim = simulate(cfg);
  CHECK((sim.dataset.y.array() - 0.05).abs().maxCoeff() < 1e-4);
  CHECK(sim.truth.heritability == 0.0);
}

TEST_CASE("reference parameters give N = 1430 over 70 blocks") {
  SimulationConfig cfg;
  cfg.block_layout = reference_block_layout();
  cfg.n_markers = 200;
  const auto sim = simulate(cfg);
  CHECK(sim.dataset.n_obs() == 1430);
  CHECK(sim.dataset.n_blocks() == 70);
  CHECK(sim.dataset.n_replicates() == 2);
  CHECK(sim.dataset.n_genotypes() == 715);
  CHECK(sim.truth.heritability > 0.0);
  CHECK(sim.truth.heritability < 1.0);
}

TEST_CASE("every genotype appears once per replicate") {
  const auto sim = simulate(small_config());
  const auto& ds = sim.dataset;
  for (Index k = 0; k < 2; ++k) {
    std::vector<int> seen(50, 0);
    for (Index i = 0; i < 50; ++i) ++seen[static_cast<std::size_t>(ds.genotype_of[static_cast<std::size_t>(k * 50 + i)])];
    for (int s : seen) CHECK(s == 1);
  }
  // Rows of one genotype share the marker row.
  CHECK(ds.Xg.row(0) == ds.Xg.row(50 + [&] {
    for (Index i = 0; i < 50; ++i)
      if (ds.genotype_of[static_cast<std::size_t>(50 + i)] == ds.genotype_of[0]) return i;
    return Index{-1};
  }()));
}

TEST_CASE("residual variance self-test") {
  SimulationConfig cfg;
  cfg.phi = 0.0;
  cfg.sigma2_g = 0.0;
  cfg.sigma2_b = 0.0;
  cfg.sigma2_e = 3.0;
  cfg.n_genotypes = 50000;
  cfg.n_markers = 1;
  cfg.block_layout = {50000};
  cfg.seed = 12;
  const auto sim = simulate(cfg);
  const auto& y = sim.dataset.y;
  const double var = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
  CHECK(std::abs(var / 3.0 - 1.0) < 0.02);
}

TEST_CASE("seeded runs are byte-identical") {
  const auto dir = test::temp_dir("simulate_det");
  for (int run = 0; run < 2; ++run) {
    const auto sim = simulate(small_config());
    const auto sub = dir / std::to_string(run);
    std::filesystem::create_directories(sub);
    write_dataset(sim.dataset, sub / "p.csv", sub / "m.csv");
    write_truth(sim.truth, sub / "t.csv");
  }
  for (const char* f : {"p.csv", "m.csv", "t.csv"}) {
    CHECK(slurp(dir / "0" / f) == slurp(dir / "1" / f));
  }
  auto other = small_config();
  other.seed = 78;
  CHECK(simulate(other).dataset.y != simulate(small_config()).dataset.y);
}

TEST_CASE("random contamination count and shift") {
  auto cfg = small_config();
  const auto sim = simulate(cfg);
  const auto& ds = sim.dataset;
  REQUIRE(ds.n_obs() == 100);
  const auto c = contaminate(ds, ContaminationScheme::random(), 1.5, 9);
  REQUIRE(c.indices.size() == 5);
  CHECK(std::is_sorted(c.indices.begin(), c.indices.end()));
  std::vector<bool> hit(100, false);
  for (Index i : c.indices) hit[static_cast<std::size_t>(i)] = true;
  for (Index i = 0; i < 100; ++i) {
    if (hit[static_cast<std::size_t>(i)]) {
      CHECK(c.dataset.y(i) == ds.y(i) + 5.0 * 1.5);
    } else {
      CHECK(c.dataset.y(i) == ds.y(i));
    }
  }
  CHECK(c.dataset.Xg == ds.Xg);
  CHECK(c.dataset.Xb == ds.Xb);
  CHECK(c.dataset.Z == ds.Z);
  CHECK(c.dataset.replicate_sizes == ds.replicate_sizes);
}

TEST_CASE("contamination count rounds half up with a minimum of one") {
  auto cfg = small_config();
  cfg.n_genotypes = 15;
  cfg.block_layout = {5, 5, 5};
  const auto ds = simulate(cfg).dataset;  // N = 30, 0.05 N = 1.5
  CHECK(contaminate(ds, ContaminationScheme::random(), 1.0, 1).indices.size() == 2);
  auto tiny = ContaminationScheme::random();
  tiny.fraction = 0.001;
  CHECK(contaminate(ds, tiny, 1.0, 1).indices.size() == 1);
}

TEST_CASE("none scheme leaves data unchanged") {
  const auto ds = simulate(small_config()).dataset;
  const auto c = contaminate(ds, ContaminationScheme::none(), 1.0, 3);
  CHECK(c.indices.empty());
  CHECK(c.dataset.y == ds.y);
}

TEST_CASE("block contamination on the reference layout") {
  SimulationConfig cfg;
  cfg.block_layout = reference_block_layout();
  cfg.n_markers = 5;
  const auto ds = simulate(cfg).dataset;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = contaminate(ds, ContaminationScheme::block(), 2.0, seed);
    CHECK(c.indices.size() >= 100);
    CHECK(c.indices.size() <= 130);
    std::vector<Index> blocks;
    for (Index i : c.indices) {
      blocks.push_back(ds.block_of[static_cast<std::size_t>(i)]);
      CHECK(c.dataset.y(i) == ds.y(i) + 8.0 * 2.0);
    }
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
    CHECK(blocks.size() == 5);
  }
}

TEST_CASE("contamination parameter checks") {
  const auto ds = simulate(small_config()).dataset;
  auto bad = ContaminationScheme::random();
  bad.fraction = 1.0;
  CHECK_THROWS_AS(contaminate(ds, bad, 1.0, 1), DataError);
  auto many = ContaminationScheme::block();
  many.n_blocks = 6;
  CHECK_THROWS_AS(contaminate(ds, many, 1.0, 1), DataError);
  CHECK_THROWS_AS(contaminate(ds, ContaminationScheme::random(), 0.0, 1), DataError);
  CHECK(ContaminationScheme::parse("block").kind == ContaminationKind::Block);
  CHECK_THROWS_AS(ContaminationScheme::parse("other"), DataError);
}
