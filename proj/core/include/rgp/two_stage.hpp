#pragma once

#include "rgp/dataset.hpp"
#include "rgp/mdpde.hpp"
#include "rgp/robust_m.hpp"

namespace rgp {

/// eta * Z1 = Z and eta * X1 = Xg.
struct TwoStageDesign {
  MatrixXd eta;  ///< N x G genotype incidence
  MatrixXd Z1;   ///< G x L
  MatrixXd X1;   ///< G x p
};

/// Representative rows are the first observation of each genotype. Throws
/// DataError listing every genotype whose observations disagree on marker or
/// confounder rows.
TwoStageDesign build_two_stage_design(const PhenotypeDataset& ds);

struct StageOneResult {
  VectorXd mu_hat;  ///< adjusted genotype means
  VectorXd u_b_hat;
  double sigma2_b = 0.0;
  double sigma2_e = 1.0;
  FitDiagnostics diagnostics;
};

/// y = eta mu + Xb u_b + e with mu fixed and u_b random, by Huber IRLS.
/// Throws DataError naming genotypes that coincide with a single block.
StageOneResult stage_one_fit(const PhenotypeDataset& ds, const TwoStageDesign& design,
                             const RobustFitConfig& cfg);

enum class StageTwoMethod { Mdpde, Huber, Classical };

struct StageTwoConfig {
  StageTwoMethod method = StageTwoMethod::Mdpde;
  DpdConfig dpd;          ///< alpha used by Mdpde; Classical forces alpha = 0
  RobustFitConfig huber;  ///< Huber stage two
};

/// mu_hat = Z1 gamma + X1 u_g + e~ with homoscedastic e~, then ridge
/// prediction of u_g and observation-level fitted values.
FitResult stage_two_fit(const PhenotypeDataset& ds, const TwoStageDesign& design,
                        const StageOneResult& s1, const StageTwoConfig& cfg);

/// Stage one followed by stage two.
FitResult two_stage_fit(const PhenotypeDataset& ds, const RobustFitConfig& stage_one,
                        const StageTwoConfig& stage_two);

}  // namespace rgp
