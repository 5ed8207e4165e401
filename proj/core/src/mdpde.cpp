#include "rgp/mdpde.hpp"

#include "rgp/error.hpp"
#include "rgp/heritability.hpp"
#include "rgp/metrics.hpp"
#include "rgp/mme.hpp"
#include "rgp/optimize.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kMaxLambda = 1e15;

}  // namespace

void DpdConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DataError("alpha must be >= 0");
  if (max_iter < 1) throw DataError("max_iter must be positive");
  if (!(obj_tol > 0.0) || !(param_tol > 0.0)) throw DataError("tolerances must be positive");
}

LmmCriterion::LmmCriterion(std::vector<GaussianBlock> blocks, double alpha) : alpha_(alpha) {
  if (blocks.empty()) throw DataError("criterion needs at least one block");
  if (alpha < 0.0) throw DataError("alpha must be >= 0");
  n_fixed_ = blocks.front().Z.cols();
  n_components_ = static_cast<Index>(blocks.front().X.size());
  for (auto& b : blocks) {
    if (b.Z.cols() != n_fixed_ || static_cast<Index>(b.X.size()) != n_components_ ||
        b.Z.rows() != b.y.size()) {
      throw DataError("inconsistent criterion blocks");
    }
    Prepared p;
    for (const auto& X : b.X) {
      if (X.rows() != b.y.size()) throw DataError("inconsistent criterion blocks");
      p.kernels.push_back(X * X.transpose());
    }
    p.data = std::move(b);
    blocks_.push_back(std::move(p));
  }
}

double LmmCriterion::max_log_prefactor(const VectorXd& theta) const {
  double best = -std::numeric_limits<double>::infinity();
  const VectorXd s2 = theta.tail(n_components_ + 1).array().exp();
  for (const auto& b : blocks_) {
    const Index n = b.data.y.size();
    MatrixXd V = MatrixXd::Identity(n, n) * s2(n_components_);
    for (Index c = 0; c < n_components_; ++c) V += s2(c) * b.kernels[static_cast<std::size_t>(c)];
    const auto llt = robust_cholesky(std::move(V), nullptr, "replicate covariance");
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double lp = -0.5 * alpha_ * (static_cast<double>(n) * kLog2Pi + log_det) -
                      0.5 * static_cast<double>(n) * std::log1p(alpha_);
    best = std::max(best, lp);
  }
  return best;
}

double LmmCriterion::evaluate(const VectorXd& theta, VectorXd* grad) const {
  if (theta.size() != dim()) throw DataError("parameter vector has the wrong dimension");
  const VectorXd gamma = theta.head(n_fixed_);
  const VectorXd s2 = theta.tail(n_components_ + 1).array().exp();
  const double a = alpha_;
  const double r = static_cast<double>(blocks_.size());

  double total = 0.0;
  if (grad) grad->setZero(dim());

  for (const auto& b : blocks_) {
    const Index n = b.data.y.size();
    const double nd = static_cast<double>(n);
    MatrixXd V = MatrixXd::Identity(n, n) * s2(n_components_);
    for (Index c = 0; c < n_components_; ++c) V += s2(c) * b.kernels[static_cast<std::size_t>(c)];
    const auto llt = robust_cholesky(std::move(V), nullptr, "replicate covariance");
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const VectorXd resid = b.data.y - b.data.Z * gamma;
    const VectorXd w = llt.solve(resid);
    const double Q = resid.dot(w);

    // d log|V| / d log s2_c = s2_c tr(V^-1 K_c); dQ / d log s2_c = -s2_c w'K_c w
    VectorXd dlogdet, dQ;
    if (grad) {
      dlogdet.resize(n_components_ + 1);
      dQ.resize(n_components_ + 1);
      for (Index c = 0; c < n_components_; ++c) {
        const auto& X = b.data.X[static_cast<std::size_t>(c)];
        const MatrixXd LiX = llt.matrixL().solve(X);
        dlogdet(c) = s2(c) * LiX.squaredNorm();
        dQ(c) = -s2(c) * (X.transpose() * w).squaredNorm();
      }
      const MatrixXd Li = llt.matrixL().solve(MatrixXd::Identity(n, n));
      dlogdet(n_components_) = s2(n_components_) * Li.squaredNorm();
      dQ(n_components_) = -s2(n_components_) * w.squaredNorm();
    }

    if (a == 0.0) {
      total += 0.5 * (nd * kLog2Pi + log_det + Q);
      if (grad) {
        grad->head(n_fixed_) -= b.data.Z.transpose() * w;
        grad->tail(n_components_ + 1) += 0.5 * (dlogdet + dQ);
      }
      continue;
    }

    const double log_c = -0.5 * a * (nd * kLog2Pi + log_det) - log_scale_;
    const double log_first = log_c - 0.5 * nd * std::log1p(a);
    const double coef = 1.0 + 1.0 / a;
    const double first = std::exp(log_first);             // C (1+a)^(-n/2)
    const double second = coef * std::exp(log_c - 0.5 * a * Q);  // C (1+1/a) E
    const double term = first - second;
    const double lower = std::exp(log_c) * (std::exp(-0.5 * nd * std::log1p(a)) - coef);
    if (!(term >= lower - 1e-12 * (first + second + std::abs(lower)))) {
      throw NumericError(fmt::format("DPD term {} below its lower bound {}", term, lower));
    }
    total += term;
    if (grad) {
      grad->head(n_fixed_) -= a * second * (b.data.Z.transpose() * w);
      grad->tail(n_components_ + 1) += -0.5 * a * term * dlogdet + 0.5 * a * second * dQ;
    }
  }
  if (grad) *grad /= r;
  return total / r;
}

std::vector<GaussianBlock> onestage_blocks(const PhenotypeDataset& ds) {
  std::vector<GaussianBlock> blocks;
  Index offset = 0;
  for (Index k = 0; k < ds.n_replicates(); ++k) {
    const Index n = ds.replicate_sizes[static_cast<std::size_t>(k)];
    GaussianBlock b;
    b.y = ds.y.segment(offset, n);
    b.Z = ds.Z.middleRows(offset, n);
    b.X.push_back(ds.Xg.middleRows(offset, n));
    b.X.push_back(ds.Xb.middleRows(offset, n));
    blocks.push_back(std::move(b));
    offset += n;
  }
  return blocks;
}

VectorXd pack_onestage(const VectorXd& gamma, const VarianceComponents& vc) {
  VectorXd theta(gamma.size() + 3);
  theta.head(gamma.size()) = gamma;
  theta(gamma.size()) = std::log(vc.sigma2_g);
  theta(gamma.size() + 1) = std::log(vc.sigma2_b);
  theta(gamma.size() + 2) = std::log(vc.sigma2_e);
  return theta;
}

CovarianceAssembly assemble_covariance(const PhenotypeDataset& ds, const VarianceComponents& vc) {
  vc.validate();
  CovarianceAssembly out;
  Index offset = 0;
  for (Index k = 0; k < ds.n_replicates(); ++k) {
    const Index n = ds.replicate_sizes[static_cast<std::size_t>(k)];
    const auto Xg = ds.Xg.middleRows(offset, n);
    const auto Xb = ds.Xb.middleRows(offset, n);
    CovarianceAssembly::Replicate rep;
    rep.V = vc.sigma2_e * MatrixXd::Identity(n, n);
    rep.V.noalias() += vc.sigma2_g * (Xg * Xg.transpose());
    rep.V.noalias() += vc.sigma2_b * (Xb * Xb.transpose());
    rep.llt = robust_cholesky(rep.V, nullptr, "replicate covariance");
    rep.log_det = 2.0 * rep.llt.matrixLLT().diagonal().array().log().sum();
    out.per_replicate.push_back(std::move(rep));
    offset += n;
  }
  return out;
}

double dpd_objective(const PhenotypeDataset& ds, const VectorXd& gamma,
                     const VarianceComponents& vc, double alpha) {
  if (!(alpha > 0.0)) throw DataError("dpd_objective requires alpha > 0");
  vc.validate();
  const LmmCriterion crit(onestage_blocks(ds), alpha);
  return crit.value(pack_onestage(gamma, vc));
}

double gaussian_neg_loglik(const PhenotypeDataset& ds, const VectorXd& gamma,
                           const VarianceComponents& vc) {
  vc.validate();
  const LmmCriterion crit(onestage_blocks(ds), 0.0);
  return crit.value(pack_onestage(gamma, vc));
}

namespace {

struct CriterionFit {
  VectorXd theta;  ///< full parameter vector, variances clamped
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes crit over the free coordinates of theta0. Log-variances are
/// clamped into [log_floor, log_ceiling]; inactive components stay at log_floor.
CriterionFit minimize_criterion(LmmCriterion& crit, const VectorXd& theta0, const VectorXd& steps,
                                const std::vector<bool>& active, double log_floor,
                                double log_ceiling, const DpdConfig& cfg) {
  const Index q = crit.n_fixed();
  const Index m = crit.n_components();
  std::vector<Index> free_index;
  for (Index i = 0; i < crit.dim(); ++i) {
    if (i < q || i == q + m || active[static_cast<std::size_t>(i - q)]) free_index.push_back(i);
  }
  const auto nfree = static_cast<Index>(free_index.size());

  auto expand = [&](const VectorXd& x) {
    VectorXd theta = theta0;
    for (Index c = 0; c < m; ++c) {
      if (!active[static_cast<std::size_t>(c)]) theta(q + c) = log_floor;
    }
    for (Index i = 0; i < nfree; ++i) theta(free_index[static_cast<std::size_t>(i)]) = x(i);
    for (Index i = q; i < crit.dim(); ++i) theta(i) = std::clamp(theta(i), log_floor, log_ceiling);
    return theta;
  };
  auto reduce = [&](const VectorXd& theta) {
    VectorXd x(nfree);
    for (Index i = 0; i < nfree; ++i) x(i) = theta(free_index[static_cast<std::size_t>(i)]);
    return x;
  };

  if (crit.alpha() > 0.0) crit.set_log_scale(crit.max_log_prefactor(expand(reduce(theta0))));

  // Quadratic pull back into the box so clamped directions are not flat.
  auto excess = [&](const VectorXd& x, Index i) {
    if (free_index[static_cast<std::size_t>(i)] < q) return 0.0;
    if (x(i) > log_ceiling) return x(i) - log_ceiling;
    if (x(i) < log_floor) return x(i) - log_floor;
    return 0.0;
  };
  auto penalty = [&](const VectorXd& x) {
    double pen = 0.0;
    for (Index i = 0; i < nfree; ++i) pen += excess(x, i) * excess(x, i);
    return pen;
  };

  const Objective f = [&](const VectorXd& x) {
    try {
      return crit.value(expand(x)) + penalty(x);
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const DifferentiableObjective fdf = [&](const VectorXd& x, VectorXd* g) {
    const VectorXd theta = expand(x);
    VectorXd full;
    double v;
    try {
      v = g ? crit.value_and_gradient(theta, full) : crit.value(theta);
    } catch (const NumericError&) {
      if (g) g->setZero(nfree);
      return std::numeric_limits<double>::infinity();
    }
    if (g) {
      g->resize(nfree);
      for (Index i = 0; i < nfree; ++i) {
        const Index idx = free_index[static_cast<std::size_t>(i)];
        // clamped coordinates have zero derivative
        const bool pinned = idx >= q && (theta(idx) <= log_floor || theta(idx) >= log_ceiling);
        (*g)(i) = (pinned ? 0.0 : full(idx)) + 2.0 * excess(x, i);
      }
    }
    return v + penalty(x);
  };

  const bool simplex = cfg.optimizer == OptimizerKind::Simplex ||
                       (cfg.optimizer == OptimizerKind::Auto && nfree <= 20);
  const VectorXd step = reduce(steps);

  auto run = [&](const VectorXd& start) {
    if (simplex) return minimize_simplex(f, start, step, cfg.max_iter, cfg.param_tol, cfg.obj_tol);
    return minimize_bfgs(fdf, start, cfg.max_iter, cfg.obj_tol, 0.1);
  };

  OptimizeResult best = run(reduce(theta0));
  VectorXd restart = best.x;
  for (Index i = 0; i < nfree; ++i) {
    if (free_index[static_cast<std::size_t>(i)] >= q) restart(i) += std::log(1.5);
  }
  OptimizeResult second = run(restart);
  const int total_iter = best.iterations + second.iterations;
  if (second.value < best.value) best = second;
  best.value -= penalty(best.x);

  CriterionFit out;
  out.theta = expand(best.x);
  const double saved_scale = crit.log_scale();
  crit.set_log_scale(0.0);
  try {
    out.value = crit.value(out.theta);
  } catch (const NumericError&) {
    out.value = std::numeric_limits<double>::quiet_NaN();
  }
  crit.set_log_scale(saved_scale);
  out.iterations = total_iter;
  out.converged = best.converged && std::isfinite(best.value) && best.value < 1e99;
  return out;
}

double positive_or(double v, double fallback) { return (std::isfinite(v) && v > 0.0) ? v : fallback; }

double block_mean_variance(const VectorXd& resid, const MatrixXd& Xb) {
  if (Xb.cols() < 2) return 0.0;
  const VectorXd counts = Xb.colwise().sum().transpose();
  const VectorXd sums = Xb.transpose() * resid;
  std::vector<double> means;
  for (Index b = 0; b < Xb.cols(); ++b) {
    if (counts(b) > 0) means.push_back(sums(b) / counts(b));
  }
  if (means.size() < 2) return 0.0;
  const Eigen::Map<const VectorXd> mv(means.data(), static_cast<Index>(means.size()));
  return (mv.array() - mv.mean()).square().sum() / static_cast<double>(means.size() - 1);
}

}  // namespace

FitResult mdpde_fit_onestage(const PhenotypeDataset& ds, const DpdConfig& cfg,
                             const std::optional<VectorXd>& init) {
  cfg.validate();
  const Index N = ds.n_obs();
  const Index L = ds.n_fixed();
  const Index p = ds.n_markers();
  const Index B = ds.n_blocks();
  if (N < L + 3) {
    throw DataError(fmt::format("degenerate data: N = {} < L + 3 = {}", N, L + 3));
  }

  LmmCriterion crit(onestage_blocks(ds), cfg.alpha);

  // Method-of-moments start.
  const VectorXd gamma_ols = ds.Z.colPivHouseholderQr().solve(ds.y);
  const VectorXd resid = ds.y - ds.Z * gamma_ols;
  const double var_y = positive_or(resid.squaredNorm() / static_cast<double>(N - 1), 1.0);
  const double total = positive_or(std::pow(mad_scale(resid), 2), var_y);
  const double s2b = std::clamp(block_mean_variance(resid, ds.Xb), 1e-6 * total, 0.5 * total);
  const double remaining = total - s2b;
  const double marker_scale =
      p > 0 ? positive_or(ds.Xg.squaredNorm() / static_cast<double>(N), 1.0) : 1.0;
  const double s2e = 0.5 * remaining;
  const double s2g = std::max(0.5 * remaining / marker_scale, 1e-6);

  VectorXd theta0(L + 3);
  theta0.head(L) = gamma_ols;
  theta0(L) = std::log(s2g);
  theta0(L + 1) = std::log(s2b);
  theta0(L + 2) = std::log(s2e);
  if (init) {
    if (init->size() != theta0.size()) throw DataError("initial parameter vector has the wrong size");
    theta0 = *init;
  }

  VectorXd steps(L + 3);
  const double sd = std::sqrt(total);
  for (Index c = 0; c < L; ++c) {
    const double col_rms = std::sqrt(ds.Z.col(c).squaredNorm() / static_cast<double>(N));
    steps(c) = 0.5 * sd / positive_or(col_rms, 1.0);
  }
  steps.tail(3).setConstant(0.5);

  const bool has_markers = p > 0 && ds.Xg.squaredNorm() > 0.0;
  const bool has_blocks = B > 1;
  const double log_floor = std::log(1e-8 * var_y);
  const double log_ceiling = std::log(1e8 * var_y);
  const auto fit =
      minimize_criterion(crit, theta0, steps, {has_markers, has_blocks}, log_floor, log_ceiling, cfg);

  FitResult out;
  out.method = cfg.alpha == 0.0 ? "mle" : fmt::format("mdpde1(alpha={})", cfg.alpha);
  out.gamma_hat = fit.theta.head(L);
  out.variances.sigma2_g = has_markers ? std::exp(fit.theta(L)) : 0.0;
  out.variances.sigma2_b = has_blocks ? std::exp(fit.theta(L + 1)) : 0.0;
  out.variances.sigma2_e = std::exp(fit.theta(L + 2));
  out.variances.sigma2_u_total = total_genetic_variance(ds.Xg, out.variances.sigma2_g);

  const double lambda =
      has_markers ? std::min(out.variances.sigma2_e / out.variances.sigma2_g, kMaxLambda) : kMaxLambda;
  const double lambda_b =
      has_blocks ? std::min(out.variances.sigma2_e / out.variances.sigma2_b, kMaxLambda) : kMaxLambda;
  out.shrinkage = VectorXd::Constant(p, lambda);
  out.block_shrinkage = lambda_b;
  out.effects = ridge_solution(ds, shrinkage_diagonal(out.shrinkage, B, lambda_b));
  out.breeding_values = breeding_values(ds, out.effects.u_g);
  out.fitted = predict(ds, out.gamma_hat, out.effects);
  out.heritability =
      heritability(out.variances.sigma2_u_total, out.variances.sigma2_e, ds.n_replicates());
  out.heritability_convention = "homoscedastic";
  out.diagnostics.iterations = fit.iterations;
  out.diagnostics.objective = fit.value;
  out.diagnostics.converged = fit.converged;
  if (!fit.converged) out.diagnostics.note = "optimizer did not converge; best iterate returned";
  return out;
}

GenericDpdFit mdpde_fit_generic(const VectorXd& response, const MatrixXd& fixed_design,
                                const MatrixXd& random_design, const DpdConfig& cfg) {
  cfg.validate();
  const Index m = response.size();
  const Index q = fixed_design.cols();
  if (fixed_design.rows() != m || random_design.rows() != m) {
    throw DataError("dimension mismatch in generic DPD fit");
  }
  if (m <= q) throw DataError(fmt::format("degenerate data: m = {} <= q = {}", m, q));

  GaussianBlock block{response, fixed_design, {random_design}};
  LmmCriterion crit({block}, cfg.alpha);

  const VectorXd coef_ols = fixed_design.colPivHouseholderQr().solve(response);
  const VectorXd resid = response - fixed_design * coef_ols;
  const double var_y = positive_or(resid.squaredNorm() / static_cast<double>(std::max<Index>(m - 1, 1)),
                                   positive_or(response.squaredNorm() / static_cast<double>(m), 1.0));
  const double total = positive_or(std::pow(mad_scale(resid), 2), var_y);
  const bool has_random = random_design.cols() > 0 && random_design.squaredNorm() > 0.0;
  const double scale =
      has_random ? positive_or(random_design.squaredNorm() / static_cast<double>(m), 1.0) : 1.0;

  VectorXd theta0(q + 2);
  theta0.head(q) = coef_ols;
  theta0(q) = std::log(std::max(0.5 * total / scale, 1e-6));
  theta0(q + 1) = std::log(has_random ? 0.5 * total : total);

  VectorXd steps(q + 2);
  const double sd = std::sqrt(total);
  for (Index c = 0; c < q; ++c) {
    const double col_rms = std::sqrt(fixed_design.col(c).squaredNorm() / static_cast<double>(m));
    steps(c) = 0.5 * sd / positive_or(col_rms, 1.0);
  }
  steps.tail(2).setConstant(0.5);

  const double log_floor = std::log(1e-8 * var_y);
  const double log_ceiling = std::log(1e8 * var_y);
  const auto fit = minimize_criterion(crit, theta0, steps, {has_random}, log_floor, log_ceiling, cfg);

  GenericDpdFit out;
  out.coef = fit.theta.head(q);
  out.sigma2_random = has_random ? std::exp(fit.theta(q)) : 0.0;
  out.sigma2_resid = std::exp(fit.theta(q + 1));
  out.objective = fit.value;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  return out;
}

}  // namespace rgp
