#pragma once

#include "rgp/dataset.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <vector>

namespace rgp {

enum class OptimizerKind {
  Auto,         ///< simplex when the parameter dimension is at most 20, else quasi-Newton
  Simplex,      ///< Nelder-Mead
  QuasiNewton,  ///< BFGS on the analytic gradient
};

struct DpdConfig {
  double alpha = 0.5;  ///< 0 selects the Gaussian maximum-likelihood limit
  OptimizerKind optimizer = OptimizerKind::Auto;
  int max_iter = 5000;
  double obj_tol = 1e-10;
  double param_tol = 1e-7;

  void validate() const;
};

/// One independent Gaussian block: y ~ N(Z gamma, sum_c s2_c X_c X_c' + s2_e I).
struct GaussianBlock {
  VectorXd y;
  MatrixXd Z;
  std::vector<MatrixXd> X;  ///< one design per variance component
};

/// Per-replicate covariance V_k with its Cholesky factor.
struct CovarianceAssembly {
  struct Replicate {
    MatrixXd V;
    Eigen::LLT<MatrixXd> llt;
    double log_det = 0.0;
  };
  std::vector<Replicate> per_replicate;
};

/// V_k = s2_e I + s2_g Xgk Xgk' + s2_b Xbk Xbk' for every replicate k.
CovarianceAssembly assemble_covariance(const PhenotypeDataset& ds, const VarianceComponents& vc);

/// Empirical DPD criterion (alpha > 0) or mean Gaussian negative log-likelihood
/// (alpha == 0) averaged over independent blocks, as a function of
/// theta = [gamma, log s2_1, ..., log s2_m, log s2_e].
///
/// For alpha > 0 each block contributes
///   (2 pi)^(-n a/2) |V|^(-a/2) [ (1+a)^(-n/2) - (1 + 1/a) exp(-a/2 r'V^-1 r) ].
/// Terms are assembled in log space; value() returns H * exp(-log_scale) so
/// an optimizer can work at unit magnitude without moving the minimizer.
class LmmCriterion {
 public:
  LmmCriterion(std::vector<GaussianBlock> blocks, double alpha);

  Index n_fixed() const { return n_fixed_; }
  Index n_components() const { return n_components_; }
  Index dim() const { return n_fixed_ + n_components_ + 1; }
  double alpha() const { return alpha_; }
  std::size_t n_blocks() const { return blocks_.size(); }

  void set_log_scale(double s) { log_scale_ = s; }
  double log_scale() const { return log_scale_; }

  double value(const VectorXd& theta) const { return evaluate(theta, nullptr); }
  double value_and_gradient(const VectorXd& theta, VectorXd& grad) const {
    return evaluate(theta, &grad);
  }

  /// Largest per-block log of C (1+a)^(-n/2), the magnitude of the leading term.
  double max_log_prefactor(const VectorXd& theta) const;

 private:
  double evaluate(const VectorXd& theta, VectorXd* grad) const;

  struct Prepared {
    GaussianBlock data;
    std::vector<MatrixXd> kernels;  ///< X_c X_c'
  };
  std::vector<Prepared> blocks_;
  double alpha_;
  Index n_fixed_ = 0;
  Index n_components_ = 0;
  double log_scale_ = 0.0;
};

/// Per-replicate blocks of the one-stage model, components {Xg, Xb}.
std::vector<GaussianBlock> onestage_blocks(const PhenotypeDataset& ds);

/// theta = [gamma, log s2_g, log s2_b, log s2_e]
VectorXd pack_onestage(const VectorXd& gamma, const VarianceComponents& vc);

/// H_n(theta) for the one-stage model; alpha > 0.
double dpd_objective(const PhenotypeDataset& ds, const VectorXd& gamma,
                     const VarianceComponents& vc, double alpha);

/// Mean over replicates of the Gaussian negative log-likelihood.
double gaussian_neg_loglik(const PhenotypeDataset& ds, const VectorXd& gamma,
                           const VarianceComponents& vc);

/// Minimizes the one-stage criterion over (gamma, log variances), then
/// predicts random effects by ridge with lambda = s2_e / s2_g.
/// alpha == 0 gives the Gaussian MLE.
FitResult mdpde_fit_onestage(const PhenotypeDataset& ds, const DpdConfig& cfg,
                             const std::optional<VectorXd>& init = std::nullopt);

struct GenericDpdFit {
  VectorXd coef;
  double sigma2_random = 0.0;
  double sigma2_resid = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// response ~ N(F gamma, s2_random R R' + s2_resid I), single-term criterion.
GenericDpdFit mdpde_fit_generic(const VectorXd& response, const MatrixXd& fixed_design,
                                const MatrixXd& random_design, const DpdConfig& cfg);

}  // namespace rgp
