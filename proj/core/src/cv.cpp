#include "rgp/cv.hpp"

#include "rgp/error.hpp"
#include "rgp/random.hpp"

#include <fmt/format.h>

#include <cmath>

namespace rgp {

CvSplit cv_split(const PhenotypeDataset& ds, double train_fraction, std::uint64_t seed) {
  const Index N = ds.n_obs();
  const Index G = ds.n_genotypes();
  const Index B = ds.n_blocks();
  if (N < 10) throw DataError(fmt::format("cross-validation needs at least 10 observations, got {}", N));
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("train fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<Index>(std::floor(train_fraction * static_cast<double>(G) + 0.5));
  if (n_train < 1 || n_train >= G) {
    throw DataError(fmt::format("cannot split {} genotypes with train fraction {}", G, train_fraction));
  }

  std::vector<bool> block_used(static_cast<std::size_t>(B), false);
  for (Index b : ds.block_of) block_used[static_cast<std::size_t>(b)] = true;

  RandomSource rng(seed);
  constexpr int kMaxDraws = 21;
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    std::vector<Index> order(static_cast<std::size_t>(G));
    for (Index g = 0; g < G; ++g) order[static_cast<std::size_t>(g)] = g;
    rng.shuffle(order);
    std::vector<bool> in_train(static_cast<std::size_t>(G), false);
    for (Index k = 0; k < n_train; ++k) in_train[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

    CvSplit s;
    s.block_in_train.assign(static_cast<std::size_t>(B), false);
    for (Index i = 0; i < N; ++i) {
      if (in_train[static_cast<std::size_t>(ds.genotype_of[static_cast<std::size_t>(i)])]) {
        s.train_rows.push_back(i);
        s.block_in_train[static_cast<std::size_t>(ds.block_of[static_cast<std::size_t>(i)])] = true;
      } else {
        s.test_rows.push_back(i);
      }
    }
    if (s.block_in_train != block_used) continue;
    s.train = subset_rows(ds, s.train_rows);
    s.test = subset_rows(ds, s.test_rows);
    return s;
  }
  throw DataError("cross-validation split left a block without training observations after 20 redraws");
}

}  // namespace rgp
