#include "rgp/mme.hpp"

#include "rgp/error.hpp"

#include <fmt/format.h>

#include <Eigen/QR>

namespace rgp {

namespace {

Eigen::ColPivHouseholderQR<MatrixXd> checked_qr(const MatrixXd& Z) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < Z.cols()) {
    throw DataError(fmt::format("rank-deficient Z: rank {} < {} columns", qr.rank(), Z.cols()));
  }
  return qr;
}

void check_lambda(const VectorXd& lambda, Index q) {
  if (lambda.size() != q) {
    throw DataError(fmt::format("shrinkage vector has length {}, expected {}", lambda.size(), q));
  }
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite()) {
    throw NumericError("shrinkage parameters must be positive and finite");
  }
}

bool use_dual(SolveForm form, Index n, Index L, Index q) {
  if (form == SolveForm::Auto) return L + q > 2 * n;
  return form == SolveForm::Dual;
}

}  // namespace

Eigen::LLT<MatrixXd> robust_cholesky(MatrixXd A, int* jitter_steps, const char* what) {
  Eigen::LLT<MatrixXd> llt(A);
  int steps = 0;
  if (llt.info() != Eigen::Success) {
    const double mean_diag = A.rows() > 0 ? std::abs(A.diagonal().mean()) : 1.0;
    double jitter = 1e-10 * (mean_diag > 0.0 ? mean_diag : 1.0);
    double added = 0.0;
    for (; steps < 3 && llt.info() != Eigen::Success; ++steps) {
      A.diagonal().array() += jitter - added;
      added = jitter;
      llt.compute(A);
      jitter *= 10.0;
    }
    if (llt.info() != Eigen::Success) {
      Eigen::LDLT<MatrixXd> ldlt(A);
      Index pivot = 0;
      const VectorXd d = ldlt.vectorD();
      for (Index i = 0; i < d.size(); ++i) {
        if (!(d(i) > 0.0)) {
          pivot = i;
          break;
        }
      }
      Eigen::VectorXi perm = Eigen::VectorXi::LinSpaced(A.rows(), 0, static_cast<int>(A.rows()) - 1);
      perm = ldlt.transpositionsP().transpose() * perm;
      throw NumericError(fmt::format("singular {}: non-positive pivot at index {}", what,
                                     perm(pivot)));
    }
  }
  if (jitter_steps) *jitter_steps = steps;
  return llt;
}

VectorXd projection_apply(const MatrixXd& Z, const VectorXd& v) {
  const auto qr = checked_qr(Z);
  return v - Z * qr.solve(v);
}

MatrixXd projection_apply(const MatrixXd& Z, const MatrixXd& V) {
  const auto qr = checked_qr(Z);
  return V - Z * qr.solve(V);
}

VectorXd shrinkage_diagonal(const VectorXd& marker_lambda, Index n_blocks, double block_lambda) {
  VectorXd out(marker_lambda.size() + n_blocks);
  out.head(marker_lambda.size()) = marker_lambda;
  out.tail(n_blocks).setConstant(block_lambda);
  return out;
}

MmeSolution solve_mme(const MatrixXd& Z, const MatrixXd& X, const VectorXd& y,
                      const VectorXd& lambda, const VectorXd& weights, SolveForm form) {
  const Index n = y.size();
  const Index L = Z.cols();
  const Index q = X.cols();
  if (Z.rows() != n || X.rows() != n || (weights.size() != 0 && weights.size() != n)) {
    throw DataError("dimension mismatch in mixed-model equations");
  }
  check_lambda(lambda, q);
  const VectorXd w = weights.size() == 0 ? VectorXd::Ones(n) : weights;
  if (!(w.array() > 0.0).all()) throw NumericError("observation weights must be positive");

  MmeSolution sol;
  if (!use_dual(form, n, L, q)) {
    const MatrixXd WZ = w.asDiagonal() * Z;
    const MatrixXd WX = w.asDiagonal() * X;
    MatrixXd C(L + q, L + q);
    C.topLeftCorner(L, L) = Z.transpose() * WZ;
    C.topRightCorner(L, q) = Z.transpose() * WX;
    C.bottomLeftCorner(q, L) = C.topRightCorner(L, q).transpose();
    C.bottomRightCorner(q, q) = X.transpose() * WX;
    C.bottomRightCorner(q, q).diagonal() += lambda;
    VectorXd rhs(L + q);
    rhs.head(L) = WZ.transpose() * y;
    rhs.tail(q) = WX.transpose() * y;

    const auto llt = robust_cholesky(std::move(C), &sol.jitter_steps);
    const VectorXd theta = llt.solve(rhs);
    sol.gamma_hat = theta.head(L);
    sol.u_hat = theta.tail(q);

    MatrixXd E = MatrixXd::Zero(L + q, q);
    E.bottomRows(q).setIdentity();
    const MatrixXd inv_cols = llt.solve(E);
    sol.c_diag = inv_cols.bottomRows(q).diagonal();
  } else {
    // Dual form: H = W^-1 + X G X', G = Lambda^-1.
    const VectorXd g = lambda.cwiseInverse();
    MatrixXd H = X * g.asDiagonal() * X.transpose();
    H.diagonal() += w.cwiseInverse();
    const auto llt = robust_cholesky(std::move(H), &sol.jitter_steps, "dual covariance matrix");
    const MatrixXd HiZ = llt.solve(Z);
    const auto zhz = robust_cholesky(Z.transpose() * HiZ, nullptr, "projected fixed-effect matrix");
    sol.gamma_hat = zhz.solve(HiZ.transpose() * y);
    const VectorXd resid = y - Z * sol.gamma_hat;
    const VectorXd Hi_resid = llt.solve(resid);
    sol.u_hat = g.asDiagonal() * (X.transpose() * Hi_resid);

    const MatrixXd HiX = llt.solve(X);
    const MatrixXd ZHiX = Z.transpose() * HiX;
    const MatrixXd K = zhz.solve(ZHiX);
    sol.c_diag.resize(q);
    for (Index j = 0; j < q; ++j) {
      const double xPx = X.col(j).dot(HiX.col(j)) - ZHiX.col(j).dot(K.col(j));
      sol.c_diag(j) = g(j) - g(j) * g(j) * xPx;
    }
  }
  sol.c_diag = sol.c_diag.cwiseMax(0.0);
  if (!sol.u_hat.allFinite() || !sol.gamma_hat.allFinite()) {
    throw NumericError("mixed-model equations produced non-finite estimates");
  }
  return sol;
}

MmeSolution solve_mme(const PhenotypeDataset& ds, const VectorXd& lambda, SolveForm form) {
  return solve_mme(ds.Z, stack_design(ds), ds.y, lambda, VectorXd(), form);
}

VectorXd ridge_solution(const MatrixXd& Z, const MatrixXd& X, const VectorXd& y,
                        const VectorXd& lambda, SolveForm form) {
  const Index n = y.size();
  const Index q = X.cols();
  if (Z.rows() != n || X.rows() != n) throw DataError("dimension mismatch in ridge system");
  check_lambda(lambda, q);
  const MatrixXd A = projection_apply(Z, X);
  if (!use_dual(form, n, Z.cols(), q)) {
    MatrixXd C = A.transpose() * A;
    C.diagonal() += lambda;
    const auto llt = robust_cholesky(std::move(C), nullptr, "projected ridge system");
    return llt.solve(A.transpose() * y);
  }
  const VectorXd g = lambda.cwiseInverse();
  MatrixXd H = A * g.asDiagonal() * A.transpose();
  H.diagonal().array() += 1.0;
  const auto llt = robust_cholesky(std::move(H), nullptr, "projected ridge system");
  return g.asDiagonal() * (A.transpose() * llt.solve(y));
}

RandomEffects ridge_solution(const PhenotypeDataset& ds, const VectorXd& lambda, SolveForm form) {
  const VectorXd u = ridge_solution(ds.Z, stack_design(ds), ds.y, lambda, form);
  return {u.head(ds.n_markers()), u.tail(ds.n_blocks())};
}

VectorXd breeding_values(const PhenotypeDataset& ds, const VectorXd& u_g) {
  if (u_g.size() != ds.n_markers()) throw DataError("marker-effect length mismatch");
  return ds.Xg * u_g;
}

VectorXd predict(const PhenotypeDataset& ds, const VectorXd& gamma_hat, const RandomEffects& u) {
  if (gamma_hat.size() != ds.n_fixed() || u.u_g.size() != ds.n_markers() ||
      u.u_b.size() != ds.n_blocks()) {
    throw DataError("dimension mismatch in prediction");
  }
  return ds.Z * gamma_hat + ds.Xg * u.u_g + ds.Xb * u.u_b;
}

}  // namespace rgp
