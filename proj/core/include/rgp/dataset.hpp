#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Marker alphabet declared at load time.
enum class MarkerCoding {
  Ternary,  ///< {0, 1, -1}: aa / Aa / AA
  Binary,   ///< {0, 1}: homozygote / heterozygote
};

MarkerCoding parse_marker_coding(const std::string& name);
std::string to_string(MarkerCoding coding);
bool is_valid_code(MarkerCoding coding, double value);

/// Replicate-partitioned phenotype data with confounder, marker and block
/// designs. Rows are stored replicate by replicate, so y = (y_1', ..., y_r')'.
struct PhenotypeDataset {
  VectorXd y;
  std::vector<Index> replicate_sizes;
  MatrixXd Z;   ///< N x L, always contains an all-ones column
  MatrixXd Xg;  ///< N x p marker codes
  MatrixXd Xb;  ///< N x B block incidence

  std::vector<Index> block_of;     ///< N entries in [0, B)
  std::vector<Index> genotype_of;  ///< N entries in [0, G)

  std::vector<std::string> ids;
  std::vector<std::string> replicate_labels;
  std::vector<std::string> block_labels;
  std::vector<std::string> genotype_labels;
  std::vector<std::string> confounder_names;  ///< column names of Z
  MarkerCoding coding = MarkerCoding::Binary;

  Index n_obs() const { return y.size(); }
  Index n_fixed() const { return Z.cols(); }
  Index n_markers() const { return Xg.cols(); }
  Index n_blocks() const { return Xb.cols(); }
  Index n_genotypes() const { return static_cast<Index>(genotype_labels.size()); }
  Index n_replicates() const { return static_cast<Index>(replicate_sizes.size()); }

  /// First row of replicate k.
  Index replicate_offset(Index k) const;
};

inline constexpr const char* kInterceptName = "(intercept)";

/// Row-wise table as read from disk or produced by the simulator, before the
/// replicate grouping and design matrices are built.
struct ObservationTable {
  std::vector<std::string> ids;
  std::vector<std::string> replicate;
  std::vector<std::string> block;
  std::vector<std::string> genotype;  ///< empty: every observation is its own genotype
  std::vector<double> y;
  MatrixXd confounders;  ///< N x c, intercept added automatically when absent
  std::vector<std::string> confounder_names;
  MatrixXd markers;  ///< N x p
  MarkerCoding coding = MarkerCoding::Binary;
};

/// Groups rows by replicate (stable, first-appearance order), builds Z, Xg,
/// Xb and validates every invariant. Throws DataError.
PhenotypeDataset assemble_dataset(const ObservationTable& table);

/// Checks the structural invariants of an already assembled dataset.
void validate_dataset(const PhenotypeDataset& ds);

/// Reads the phenotype and marker CSV files.
PhenotypeDataset load_dataset(const std::filesystem::path& phenotype_file,
                              const std::filesystem::path& marker_file,
                              MarkerCoding coding);

/// Writes the dataset back in the same two CSV schemas.
void write_dataset(const PhenotypeDataset& ds,
                   const std::filesystem::path& phenotype_file,
                   const std::filesystem::path& marker_file);

/// X = [Xg Xb], marker columns first.
MatrixXd stack_design(const PhenotypeDataset& ds);

/// Copy restricted to the given rows (kept in the given order, which must
/// preserve replicate grouping). Block columns are kept even when empty;
/// genotypes are renumbered to those present.
PhenotypeDataset subset_rows(const PhenotypeDataset& ds, const std::vector<Index>& rows);

/// Sum over markers of the empirical column variance; the genotypic variance
/// per unit of per-marker effect variance.
double marker_variance_scale(const MatrixXd& Xg);

/// Numerical rank with singular values below tol * max singular value dropped.
Index numerical_rank(const MatrixXd& A, double tol = 1e-10);

struct RandomEffects {
  VectorXd u_g;
  VectorXd u_b;
};

struct VarianceComponents {
  double sigma2_g = 0.0;
  std::optional<VectorXd> sigma2_g_per_marker;  ///< heteroscedastic mode
  double sigma2_b = 0.0;
  double sigma2_e = 1.0;
  double sigma2_u_total = 0.0;  ///< genetic variance of genotypic values

  void validate(Index n_markers = -1) const;
};

/// Floor applied to per-marker variances: 1e-8 times their mean.
inline constexpr double kMarkerVarianceFloorFactor = 1e-8;

struct FitDiagnostics {
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
  std::string note;
};

struct FitResult {
  std::string method;
  VectorXd gamma_hat;
  RandomEffects effects;
  VarianceComponents variances;
  VectorXd shrinkage;  ///< per-marker lambda
  double block_shrinkage = 0.0;
  VectorXd breeding_values;
  VectorXd fitted;
  double heritability = 0.0;
  std::string heritability_convention;
  FitDiagnostics diagnostics;
  std::optional<FitDiagnostics> stage_one;  ///< two-stage pipelines only
};

}  // namespace rgp
