#pragma once

#include "rgp/dataset.hpp"

#include <Eigen/Cholesky>

namespace rgp {

/// M_Z v = v - Z argmin_w |v - Z w|, computed by a least-squares solve.
/// Throws DataError when Z is rank deficient.
VectorXd projection_apply(const MatrixXd& Z, const VectorXd& v);
/// Column-wise M_Z V.
MatrixXd projection_apply(const MatrixXd& Z, const MatrixXd& V);

struct MmeSolution {
  VectorXd gamma_hat;
  VectorXd u_hat;
  VectorXd c_diag;  ///< diagonal of the random-effect block of the inverse coefficient matrix
  int jitter_steps = 0;
};

/// Primal solves the (L+q)-dimensional Henderson system; dual works with the
/// N x N matrix W^-1 + X Lambda^-1 X'. Auto picks dual when L+q > 2N.
enum class SolveForm { Auto, Primal, Dual };

/// Henderson's mixed-model equations
///   [Z'WZ  Z'WX      ] [gamma]   [Z'Wy]
///   [X'WZ  X'WX + Lam] [u    ] = [X'Wy]
/// with optional observation weights W (empty: identity).
MmeSolution solve_mme(const MatrixXd& Z, const MatrixXd& X, const VectorXd& y,
                      const VectorXd& lambda, const VectorXd& weights = VectorXd(),
                      SolveForm form = SolveForm::Auto);

/// Dataset overload; lambda has length p + B (marker entries then block entries).
MmeSolution solve_mme(const PhenotypeDataset& ds, const VectorXd& lambda,
                      SolveForm form = SolveForm::Auto);

/// u = (X' M_Z X + Lambda)^-1 X' M_Z y through the projected normal equations.
VectorXd ridge_solution(const MatrixXd& Z, const MatrixXd& X, const VectorXd& y,
                        const VectorXd& lambda, SolveForm form = SolveForm::Auto);
RandomEffects ridge_solution(const PhenotypeDataset& ds, const VectorXd& lambda,
                             SolveForm form = SolveForm::Auto);

/// Diagonal of Lambda: per-marker entries followed by B copies of block_lambda.
VectorXd shrinkage_diagonal(const VectorXd& marker_lambda, Index n_blocks, double block_lambda);

/// g = Xg u_g
VectorXd breeding_values(const PhenotypeDataset& ds, const VectorXd& u_g);

/// y_hat = Z gamma + Xg u_g + Xb u_b
VectorXd predict(const PhenotypeDataset& ds, const VectorXd& gamma_hat, const RandomEffects& u);

/// Cholesky factorization with jitter escalation: on failure add
/// 1e-10 * mean(diag), then x10, up to three times. Throws NumericError
/// naming the first non-positive pivot when every attempt fails.
Eigen::LLT<MatrixXd> robust_cholesky(MatrixXd A, int* jitter_steps = nullptr,
                                     const char* what = "coefficient matrix");

}  // namespace rgp
