#pragma once

#include "rgp/dataset.hpp"

#include <cstdint>
#include <vector>

namespace rgp {

struct CvSplit {
  PhenotypeDataset train;
  PhenotypeDataset test;
  std::vector<Index> train_rows;  ///< rows of the source dataset, ascending
  std::vector<Index> test_rows;
  std::vector<bool> block_in_train;
};

/// Partitions genotypes (round(fraction * G) to training) so that every
/// observation of a genotype lands on one side. Redraws up to 20 times when a
/// block that has observations gets none in training, then throws DataError.
CvSplit cv_split(const PhenotypeDataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace rgp
