#pragma once

#include "rgp/dataset.hpp"

#include <vector>

namespace rgp {

struct RobustFitConfig {
  double huber_k = 1.345;
  int max_iter = 200;
  double tol = 1e-6;

  void validate() const;
};

/// 1 for |t| <= k, k/|t| otherwise.
double huber_weight(double t, double k);

/// E[w(Z) Z^2] for Z ~ N(0,1) under the Huber weight with constant k,
/// trapezoid rule over [-8, 8] with 4001 points.
double huber_consistency_factor(double k);

/// Linear mixed model y = F beta + sum_c X_c u_c + e, u_c ~ N(0, s2_c I).
struct RobustLmmProblem {
  VectorXd y;
  MatrixXd fixed_design;
  std::vector<MatrixXd> random_designs;
};

struct RobustLmmFit {
  VectorXd fixed;
  VectorXd random;  ///< stacked over components
  std::vector<double> sigma2_random;
  double sigma2_e = 0.0;
  VectorXd weights;  ///< final observation weights
  VectorXd lambda;   ///< shrinkage used in the final weighted solve
  int iterations = 0;
  bool converged = false;
};

/// Huber-type iteratively reweighted fit: MAD residual scale, Huber
/// observation weights, weighted Henderson solve, and robustified EM updates
/// of the random-effect variances. Throws NumericError when the residual scale
/// collapses while residuals are not all zero.
RobustLmmFit robust_lmm_fit(const RobustLmmProblem& problem, const RobustFitConfig& cfg);

/// Homoscedastic one-stage fit (components {Xg, Xb}) summarized as variance
/// components; the base for the Rob-RMLA / Rob-RMLV variants.
struct RobustBase {
  VectorXd gamma;
  VarianceComponents vc;
  RobustLmmFit fit;
};
RobustBase robust_onestage_base(const PhenotypeDataset& ds, const RobustFitConfig& cfg);

}  // namespace rgp
