#pragma once

#include "rgp/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rgp {

/// y_ijk = phi + g_i + b_jk + e_ijk with g_i = sum_l z_il u_l.
struct SimulationConfig {
  double phi = 0.05;
  double sigma2_g = 0.005892;  ///< per-marker effect variance
  double sigma2_b = 6.27;
  double sigma2_e = 53.8715;
  Index n_genotypes = 715;
  Index replicates = 2;
  Index n_markers = 11646;
  /// Block sizes within one replicate; the same labels are reused in every
  /// replicate and must sum to n_genotypes.
  std::vector<Index> block_layout;
  double marker_maf = 0.3;
  std::uint64_t seed = 1;

  /// Throws DataError naming the offending field.
  void validate() const;
  Index n_blocks() const { return static_cast<Index>(block_layout.size()); }
};

/// 5 blocks of 13 followed by 65 blocks of 10.
std::vector<Index> reference_block_layout();
/// "5x13, 65x10" or "13,13,10" style.
std::vector<Index> parse_block_layout(const std::string& text);
std::string format_block_layout(const std::vector<Index>& layout);

struct SimulationTruth {
  VectorXd u_g;
  double phi = 0.0;
  VectorXd genotypic_values;  ///< g_i per genotype
  VectorXd block_effects;
  double heritability = 0.0;  ///< Var(g) / (Var(g) + s2_e / r), empirical Var(g)
  double sigma2_g = 0.0;
  double sigma2_b = 0.0;
  double sigma2_e = 0.0;
};

struct Simulation {
  PhenotypeDataset dataset;
  SimulationTruth truth;
};

Simulation simulate(const SimulationConfig& cfg);

/// truth.csv: quantity,value
void write_truth(const SimulationTruth& truth, const std::filesystem::path& path);

enum class ContaminationKind { None, Random, Block };

struct ContaminationScheme {
  ContaminationKind kind = ContaminationKind::None;
  double fraction = 0.05;       ///< random: share of observations
  Index n_blocks = 5;           ///< block: number of blocks
  double shift_multiplier = 5;  ///< multiples of the residual standard deviation

  static ContaminationScheme none() { return {}; }
  static ContaminationScheme random() { return {ContaminationKind::Random, 0.05, 5, 5.0}; }
  static ContaminationScheme block() { return {ContaminationKind::Block, 0.05, 5, 8.0}; }
  static ContaminationScheme parse(const std::string& name);
  std::string name() const;
  void validate() const;
};

struct Contaminated {
  PhenotypeDataset dataset;
  std::vector<Index> indices;  ///< sorted rows whose y was shifted
};

/// Random: round-half-up(fraction * N) (at least 1) distinct rows get
/// y += multiplier * sigma_e. Block: n_blocks distinct blocks; every row in
/// them, in all replicates, gets y += multiplier * sigma_e.
Contaminated contaminate(const PhenotypeDataset& ds, const ContaminationScheme& scheme,
                         double sigma_e, std::uint64_t seed);

}  // namespace rgp
