#include "rgp/robust_m.hpp"

#include "rgp/error.hpp"
#include "rgp/heritability.hpp"
#include "rgp/metrics.hpp"
#include "rgp/mme.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rgp {

void RobustFitConfig::validate() const {
  if (!(huber_k > 0.0)) throw DataError("huber_k must be positive");
  if (!(tol > 0.0)) throw DataError("tol must be positive");
  if (max_iter < 1) throw DataError("max_iter must be positive");
}

double huber_weight(double t, double k) {
  const double a = std::abs(t);
  return a <= k ? 1.0 : k / a;
}

double huber_consistency_factor(double k) {
  constexpr int kPoints = 4001;
  constexpr double kLo = -8.0;
  constexpr double kHi = 8.0;
  const double h = (kHi - kLo) / (kPoints - 1);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  double sum = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double z = kLo + h * i;
    const double f = huber_weight(z, k) * z * z * norm * std::exp(-0.5 * z * z);
    sum += (i == 0 || i == kPoints - 1) ? 0.5 * f : f;
  }
  return sum * h;
}

namespace {

constexpr double kMinLambda = 1e-12;
constexpr double kMaxLambda = 1e15;

}  // namespace

RobustLmmFit robust_lmm_fit(const RobustLmmProblem& prob, const RobustFitConfig& cfg) {
  cfg.validate();
  const Index n = prob.y.size();
  const Index q = prob.fixed_design.cols();
  const auto m = prob.random_designs.size();
  if (prob.fixed_design.rows() != n) throw DataError("fixed design row mismatch");
  if (m == 0) throw DataError("robust fit needs at least one random-effect grouping");
  if (n < q + 2) {
    throw DataError(fmt::format("robust fit needs at least {} observations, got {}", q + 2, n));
  }

  std::vector<Index> sizes;
  Index total_random = 0;
  for (const auto& X : prob.random_designs) {
    if (X.rows() != n) throw DataError("random design row mismatch");
    sizes.push_back(X.cols());
    total_random += X.cols();
  }
  MatrixXd X(n, total_random);
  for (Index c = 0, off = 0; c < static_cast<Index>(m); ++c) {
    X.middleCols(off, sizes[static_cast<std::size_t>(c)]) = prob.random_designs[static_cast<std::size_t>(c)];
    off += sizes[static_cast<std::size_t>(c)];
  }

  const double kappa = huber_consistency_factor(cfg.huber_k);
  const double y_scale = prob.y.cwiseAbs().maxCoeff() + 1.0;

  RobustLmmFit fit;
  fit.fixed = prob.fixed_design.colPivHouseholderQr().solve(prob.y);
  VectorXd resid = prob.y - prob.fixed_design * fit.fixed;
  double sigma_e = mad_scale(resid);
  fit.random = VectorXd::Zero(total_random);
  fit.weights = VectorXd::Ones(n);
  fit.lambda = VectorXd::Constant(total_random, kMaxLambda);

  auto perfect_fit = [&](const VectorXd& r) { return r.cwiseAbs().maxCoeff() <= 1e-10 * y_scale; };
  if (perfect_fit(resid)) {
    fit.sigma2_e = std::pow(1e-10 * y_scale, 2);
    fit.sigma2_random.assign(m, 0.0);
    fit.converged = true;
    return fit;
  }
  if (sigma_e == 0.0) throw NumericError("zero robust scale: residuals are identical");

  double sigma2_e = sigma_e * sigma_e;
  std::vector<double> sigma2(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto& Xc = prob.random_designs[c];
    const double row_ss = Xc.squaredNorm() / static_cast<double>(n);
    sigma2[c] = row_ss > 0.0 ? 0.5 * sigma2_e / (static_cast<double>(m) * row_ss) : 0.0;
  }
  sigma2_e *= 0.5;
  for (Index i = 0; i < n; ++i) fit.weights(i) = huber_weight(resid(i) / sigma_e, cfg.huber_k);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    VectorXd lambda(total_random);
    for (Index c = 0, off = 0; c < static_cast<Index>(m); ++c) {
      const double s2 = sigma2[static_cast<std::size_t>(c)];
      const double l = s2 > 0.0 ? std::clamp(sigma2_e / s2, kMinLambda, kMaxLambda) : kMaxLambda;
      lambda.segment(off, sizes[static_cast<std::size_t>(c)]).setConstant(l);
      off += sizes[static_cast<std::size_t>(c)];
    }
    const auto sol = solve_mme(prob.fixed_design, X, prob.y, lambda, fit.weights);
    resid = prob.y - prob.fixed_design * sol.gamma_hat - X * sol.u_hat;

    // Effective degrees of freedom of the weighted ridge fit.
    const double df = static_cast<double>(q) +
                      (VectorXd::Ones(total_random) - lambda.cwiseProduct(sol.c_diag)).sum();
    const double dof = std::max(static_cast<double>(n) - df, 1.0);
    const double raw_scale = mad_scale(resid);
    const double new_sigma_e = raw_scale * std::sqrt(static_cast<double>(n) / dof);

    const VectorXd old_fixed = fit.fixed;
    const double old_sigma2_e = sigma2_e;
    const auto old_sigma2 = sigma2;
    fit.fixed = sol.gamma_hat;
    fit.random = sol.u_hat;
    fit.lambda = lambda;
    fit.iterations = iter;

    if (new_sigma_e == 0.0) {
      if (perfect_fit(resid)) {
        fit.sigma2_e = std::pow(1e-10 * y_scale, 2);
        fit.sigma2_random = sigma2;
        fit.converged = true;
        return fit;
      }
      throw NumericError("zero robust scale: residuals are identical");
    }
    sigma2_e = new_sigma_e * new_sigma_e;
    for (Index i = 0; i < n; ++i) fit.weights(i) = huber_weight(resid(i) / new_sigma_e, cfg.huber_k);

    for (Index c = 0, off = 0; c < static_cast<Index>(m); ++c) {
      const Index qc = sizes[static_cast<std::size_t>(c)];
      auto& s2 = sigma2[static_cast<std::size_t>(c)];
      if (qc == 0 || s2 == 0.0) {
        off += qc;
        continue;
      }
      const VectorXd u = sol.u_hat.segment(off, qc);
      const double pev = old_sigma2_e * sol.c_diag.segment(off, qc).mean();
      const double spread = std::sqrt(std::max(s2 - pev, 1e-12 * s2));
      double weighted = 0.0;
      for (Index j = 0; j < qc; ++j) weighted += huber_weight(u(j) / spread, cfg.huber_k) * u(j) * u(j);
      s2 = std::max(weighted / (static_cast<double>(qc) * kappa) + pev, 1e-10 * sigma2_e);
      off += qc;
    }

    double change = std::abs(std::log(sigma2_e / old_sigma2_e));
    for (std::size_t c = 0; c < m; ++c) {
      if (old_sigma2[c] > 0.0) change = std::max(change, std::abs(std::log(sigma2[c] / old_sigma2[c])));
    }
    const double fixed_scale = old_fixed.cwiseAbs().maxCoeff() + std::sqrt(sigma2_e);
    if (q > 0) change = std::max(change, (fit.fixed - old_fixed).cwiseAbs().maxCoeff() / fixed_scale);
    if (change < cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.sigma2_e = sigma2_e;
  fit.sigma2_random = sigma2;
  return fit;
}

RobustBase robust_onestage_base(const PhenotypeDataset& ds, const RobustFitConfig& cfg) {
  RobustLmmProblem prob;
  prob.y = ds.y;
  prob.fixed_design = ds.Z;
  const bool has_markers = ds.n_markers() > 0;
  const bool has_blocks = ds.n_blocks() > 1;
  if (has_markers) prob.random_designs.push_back(ds.Xg);
  if (has_blocks) prob.random_designs.push_back(ds.Xb);
  if (prob.random_designs.empty()) throw DataError("dataset has no random effects");

  RobustBase base;
  base.fit = robust_lmm_fit(prob, cfg);
  base.gamma = base.fit.fixed;
  std::size_t c = 0;
  base.vc.sigma2_g = has_markers ? base.fit.sigma2_random[c++] : 0.0;
  base.vc.sigma2_b = has_blocks ? base.fit.sigma2_random[c++] : 0.0;
  base.vc.sigma2_e = base.fit.sigma2_e;
  base.vc.sigma2_u_total = total_genetic_variance(ds.Xg, base.vc.sigma2_g);
  return base;
}

}  // namespace rgp
