#include "rgp/dataset.hpp"
#include "rgp/error.hpp"
#include "rgp/simulate.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace rgp;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kPheno =
    "id,replicate,block,y\n"
    "a1,1,b1,1.5\n"
    "a2,1,b1,2.0\n"
    "a3,1,b2,0.5\n"
    "a4,2,b1,1.0\n"
    "a5,2,b2,3.0\n"
    "a6,2,b2,2.5\n";

}  // namespace

TEST_CASE("load_dataset reads a two-replicate table") {
  const auto dir = test::temp_dir("core_load");
  write_text(dir / "p.csv", kPheno);
  write_text(dir / "m.csv", "id,m1,m2\na1,0,1\na2,1,1\na3,0,0\na4,1,0\na5,0,1\na6,1,1\n");
  const auto ds = load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Binary);
  CHECK(ds.n_obs() == 6);
  CHECK(ds.n_replicates() == 2);
  CHECK(ds.n_markers() == 2);
  CHECK(ds.n_blocks() == 2);
  CHECK(ds.n_fixed() == 1);
  CHECK(ds.Z.col(0).isOnes());
  CHECK(ds.replicate_offset(1) == 3);
  CHECK(ds.Xg(3, 0) == 1.0);
  CHECK(ds.Xb(2, 1) == 1.0);
}

TEST_CASE("load_dataset rejects codes outside the declared alphabet") {
  const auto dir = test::temp_dir("core_codes");
  write_text(dir / "p.csv", kPheno);
  write_text(dir / "m.csv", "id,m1,m2\na1,0,2\na2,1,1\na3,0,0\na4,1,0\na5,0,1\na6,1,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Ternary),
                       doctest::Contains("unknown marker code"), DataError);
  write_text(dir / "m.csv", "id,m1,m2\na1,0,-1\na2,1,1\na3,0,0\na4,1,0\na5,0,1\na6,1,1\n");
  CHECK_THROWS_AS(load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Binary), DataError);
  CHECK_NOTHROW(load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Ternary));
}

TEST_CASE("load_dataset reports missing marker rows") {
  const auto dir = test::temp_dir("core_missing");
  write_text(dir / "p.csv", kPheno);
  write_text(dir / "m.csv", "id,m1\na1,0\na2,1\na3,0\na4,1\na5,0\nzz,1\n");
  CHECK_THROWS_AS(load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Binary), DataError);
}

TEST_CASE("write_dataset round-trips") {
  RandomSource rng(3);
  const auto ds = test::toy_dataset(rng, 8, 2, 3, 2);
  const auto dir = test::temp_dir("core_roundtrip");
  write_dataset(ds, dir / "p.csv", dir / "m.csv");
  const auto back = load_dataset(dir / "p.csv", dir / "m.csv", MarkerCoding::Binary);
  CHECK(back.y == ds.y);
  CHECK(back.Xg == ds.Xg);
  CHECK(back.Xb == ds.Xb);
  CHECK(back.ids == ds.ids);
  CHECK(back.genotype_of == ds.genotype_of);
}

TEST_CASE("assemble_dataset groups rows by replicate") {
  ObservationTable t;
  t.ids = {"x", "y", "z", "w"};
  t.replicate = {"2", "1", "2", "1"};
  t.block = {"a", "a", "b", "b"};
  t.y = {1, 2, 3, 4};
  t.markers = MatrixXd::Zero(4, 1);
  const auto ds = assemble_dataset(t);
  CHECK(ds.replicate_labels == std::vector<std::string>{"2", "1"});
  CHECK(ds.ids == std::vector<std::string>{"x", "z", "y", "w"});
  CHECK(ds.y(1) == 3.0);

  t.ids[3] = "x";
  CHECK_THROWS_AS(assemble_dataset(t), DataError);
}

TEST_CASE("rank-deficient confounders are rejected") {
  ObservationTable t;
  t.ids = {"a", "b", "c"};
  t.replicate = {"1", "1", "1"};
  t.block = {"a", "a", "a"};
  t.y = {1, 2, 3};
  t.markers = MatrixXd::Zero(3, 1);
  t.confounders = MatrixXd(3, 2);
  t.confounders << 1, 2, 1, 2, 1, 2;
  t.confounder_names = {"c1", "c2"};
  CHECK_THROWS_WITH_AS(assemble_dataset(t), doctest::Contains("rank-deficient"), DataError);
}

TEST_CASE("stack_design puts markers first") {
  RandomSource rng(5);
  const auto ds = test::toy_dataset(rng, 3, 1, 2, 2);
  const MatrixXd X = stack_design(ds);
  CHECK(X.rows() == 3);
  CHECK(X.cols() == 4);
  CHECK(X.leftCols(2) == ds.Xg);
  CHECK(X.rightCols(2) == ds.Xb);

  auto empty = ds;
  empty.Xg.resize(3, 0);
  CHECK(stack_design(empty) == ds.Xb);
}

TEST_CASE("reference layout passes validation with N = 715 per replicate") {
  SimulationConfig cfg;
  cfg.block_layout = reference_block_layout();
  cfg.replicates = 1;
  cfg.n_markers = 5;
  const auto sim = simulate(cfg);
  CHECK(sim.dataset.n_obs() == 715);
  CHECK(sim.dataset.n_blocks() == 70);
  CHECK_NOTHROW(validate_dataset(sim.dataset));
}

TEST_CASE("subset_rows keeps block columns and renumbers genotypes") {
  RandomSource rng(9);
  const auto ds = test::toy_dataset(rng, 6, 2, 2, 3);
  const auto sub = subset_rows(ds, {1, 2, 7, 8});
  CHECK(sub.n_obs() == 4);
  CHECK(sub.n_blocks() == ds.n_blocks());
  CHECK(sub.n_genotypes() == 2);
  CHECK(sub.y(2) == ds.y(7));
  CHECK_THROWS_AS(subset_rows(ds, {7, 1}), DataError);
}

TEST_CASE("numerical_rank and marker_variance_scale") {
  MatrixXd A(3, 2);
  A << 1, 2, 2, 4, 3, 6;
  CHECK(numerical_rank(A) == 1);
  MatrixXd X(4, 2);
  X << 0, 1, 1, 1, 0, 1, 1, 1;
  // column variances 1/3 and 0
  CHECK(marker_variance_scale(X) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}
