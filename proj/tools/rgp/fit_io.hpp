#pragma once

#include "rgp/dataset.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rgp::cli {

/// fit.csv (quantity,value), effects.csv (effect,label,value,lambda) and
/// predictions.csv (id,y,fitted,breeding_value) in dir.
void write_fit(const FitResult& fit, const PhenotypeDataset& ds, const std::filesystem::path& dir);

struct SavedFit {
  std::vector<std::string> gamma_names;
  VectorXd gamma;
  VectorXd u_g;
  std::vector<std::string> block_labels;
  VectorXd u_b;
};

SavedFit read_fit(const std::filesystem::path& dir);

/// Fixed effects matched by confounder name, markers by position and blocks
/// by label; blocks absent from the fit contribute 0.
VectorXd predict_saved(const SavedFit& fit, const PhenotypeDataset& ds);

}  // namespace rgp::cli
