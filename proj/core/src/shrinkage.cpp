#include "rgp/shrinkage.hpp"

#include "rgp/error.hpp"
#include "rgp/heritability.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace rgp {

namespace {

constexpr double kMaxLambda = 1e15;

/// Floors entries at kMarkerVarianceFloorFactor * mean of the positive parts.
/// Returns false when no entry is positive.
bool floor_marker_variances(VectorXd& v) {
  const double mean_pos = v.cwiseMax(0.0).mean();
  if (!(mean_pos > 0.0)) return false;
  v = v.cwiseMax(kMarkerVarianceFloorFactor * mean_pos);
  return true;
}

}  // namespace

AnovaSummary anova_per_marker(const PhenotypeDataset& ds, Index j) {
  if (j < 0 || j >= ds.n_markers()) throw DataError(fmt::format("marker index {} out of range", j));
  const Index N = ds.n_obs();
  std::map<double, std::pair<Index, double>> levels;  // code -> (count, sum)
  for (Index i = 0; i < N; ++i) {
    auto& [count, sum] = levels[ds.Xg(i, j)];
    ++count;
    sum += ds.y(i);
  }
  AnovaSummary out;
  const double grand = ds.y.mean();
  out.sst = (ds.y.array() - grand).square().sum();
  for (const auto& [code, cs] : levels) out.group_sizes.push_back(cs.first);
  const auto k = static_cast<Index>(levels.size());
  if (k < 2) {
    out.constant = true;
    out.ssw = out.sst;
    return out;
  }
  for (const auto& [code, cs] : levels) {
    const double mean = cs.second / static_cast<double>(cs.first);
    out.ssb += static_cast<double>(cs.first) * (mean - grand) * (mean - grand);
  }
  for (Index i = 0; i < N; ++i) {
    const auto& cs = levels[ds.Xg(i, j)];
    const double d = ds.y(i) - cs.second / static_cast<double>(cs.first);
    out.ssw += d * d;
  }
  out.mqm = out.ssb / static_cast<double>(k - 1);
  out.mqe = N > k ? out.ssw / static_cast<double>(N - k) : 0.0;
  return out;
}

RmlaResult rmla_shrinkage(const PhenotypeDataset& ds, const VarianceComponents& base) {
  base.validate();
  const Index p = ds.n_markers();
  const double N = static_cast<double>(ds.n_obs());
  RmlaResult out;
  out.sigma2_star.resize(p);
  for (Index j = 0; j < p; ++j) {
    const auto a = anova_per_marker(ds, j);
    if (a.constant) {
      out.sigma2_star(j) = 0.0;
      continue;
    }
    double sum_sq = 0.0;
    for (Index n_i : a.group_sizes) sum_sq += static_cast<double>(n_i) * static_cast<double>(n_i);
    const double denom = 0.5 * (N - sum_sq / N);
    out.sigma2_star(j) = (a.mqm - a.mqe) / denom;
  }
  if (!floor_marker_variances(out.sigma2_star)) {
    // No marker carries variance: equal shares.
    out.no_signal = true;
    out.sigma2_star.setOnes();
  }
  const double total = out.sigma2_star.sum();
  // s2_u as the summed per-marker variance of the base fit.
  const double s2u = base.sigma2_g_per_marker ? base.sigma2_g_per_marker->sum()
                                              : base.sigma2_g * static_cast<double>(p);
  const double ratio = s2u > 0.0 ? base.sigma2_e / s2u : kMaxLambda;
  out.lambda.resize(p);
  for (Index j = 0; j < p; ++j) {
    out.lambda(j) = std::min(ratio * total / out.sigma2_star(j), kMaxLambda);
  }
  return out;
}

RmlvResult rmlv_fit(const PhenotypeDataset& ds, const VarianceComponents& base,
                    const RmlvOptions& opts) {
  base.validate();
  if (opts.max_iter < 1 || !(opts.tol > 0.0)) throw DataError("invalid RMLV options");
  const Index p = ds.n_markers();
  const Index B = ds.n_blocks();
  const double N = static_cast<double>(ds.n_obs());
  const MatrixXd X = stack_design(ds);
  const double yty = ds.y.squaredNorm();
  const VectorXd Zty = ds.Z.transpose() * ds.y;
  const VectorXd Xty = X.transpose() * ds.y;

  VectorXd s2g = base.sigma2_g_per_marker ? *base.sigma2_g_per_marker
                                          : VectorXd::Constant(p, std::max(base.sigma2_g, 1e-12));
  double s2e = base.sigma2_e;
  double s2b = base.sigma2_b;
  const bool has_blocks = B > 1 && s2b > 0.0;

  auto make_lambda = [&](VectorXd& lambda_g, double& lambda_b) {
    lambda_g = (s2e / s2g.array()).min(kMaxLambda).matrix();
    lambda_b = has_blocks ? std::min(s2e / s2b, kMaxLambda) : kMaxLambda;
    return shrinkage_diagonal(lambda_g, B, lambda_b);
  };

  RmlvResult out;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    VectorXd lambda_g;
    double lambda_b = 0.0;
    const auto sol = solve_mme(ds.Z, X, ds.y, make_lambda(lambda_g, lambda_b));

    const double new_s2e = (yty - sol.gamma_hat.dot(Zty) - sol.u_hat.dot(Xty)) / (N - 1.0);
    if (!(new_s2e > 0.0) || !std::isfinite(new_s2e)) {
      throw NumericError(fmt::format("RMLV residual variance became non-positive ({}) at iteration {}",
                                     new_s2e, iter));
    }
    VectorXd new_s2g(p);
    for (Index j = 0; j < p; ++j) {
      const double u2 = sol.u_hat(j) * sol.u_hat(j);
      new_s2g(j) = opts.literal_update ? (u2 - new_s2e * sol.c_diag(j)) / static_cast<double>(j + 1)
                                       : u2 + new_s2e * sol.c_diag(j);
    }
    if (!floor_marker_variances(new_s2g)) new_s2g.setConstant(1e-12 * new_s2e);
    double new_s2b = s2b;
    if (has_blocks) {
      const VectorXd ub = sol.u_hat.tail(B);
      new_s2b = (ub.array().square() + new_s2e * sol.c_diag.tail(B).array()).mean();
    }

    // Components drifting to zero are measured against the mean variance.
    double change = std::abs(new_s2e - s2e) / s2e;
    const double s2g_scale = s2g.mean();
    for (Index j = 0; j < p; ++j) {
      change = std::max(change, std::abs(new_s2g(j) - s2g(j)) / std::max(s2g(j), s2g_scale));
    }
    s2e = new_s2e;
    s2g = new_s2g;
    s2b = new_s2b;
    out.iterations = iter;
    if (change < opts.tol) {
      out.converged = true;
      break;
    }
  }

  out.solution = solve_mme(ds.Z, X, ds.y, make_lambda(out.lambda, out.block_lambda));
  out.vc.sigma2_e = s2e;
  out.vc.sigma2_b = has_blocks ? s2b : 0.0;
  out.vc.sigma2_g = p > 0 ? s2g.mean() : 0.0;
  out.vc.sigma2_g_per_marker = s2g;
  out.vc.sigma2_u_total = total_genetic_variance(ds.Xg, s2g);
  return out;
}

}  // namespace rgp
