#include "rgp/two_stage.hpp"

#include "rgp/error.hpp"
#include "rgp/heritability.hpp"
#include "rgp/mme.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace rgp {

namespace {

constexpr double kMaxLambda = 1e15;

std::string join_labels(const PhenotypeDataset& ds, const std::vector<Index>& genotypes) {
  std::string out;
  for (Index g : genotypes) {
    if (!out.empty()) out += ", ";
    out += ds.genotype_labels[static_cast<std::size_t>(g)];
  }
  return out;
}

}  // namespace

TwoStageDesign build_two_stage_design(const PhenotypeDataset& ds) {
  const Index N = ds.n_obs();
  const Index G = ds.n_genotypes();
  if (static_cast<Index>(ds.genotype_of.size()) != N || G < 1) {
    throw DataError("two-stage analysis needs a genotype for every observation");
  }
  TwoStageDesign d;
  d.eta = MatrixXd::Zero(N, G);
  d.Z1.resize(G, ds.n_fixed());
  d.X1.resize(G, ds.n_markers());
  std::vector<Index> first(static_cast<std::size_t>(G), -1);
  std::vector<Index> bad;
  for (Index i = 0; i < N; ++i) {
    const Index g = ds.genotype_of[static_cast<std::size_t>(i)];
    d.eta(i, g) = 1.0;
    auto& f = first[static_cast<std::size_t>(g)];
    if (f < 0) {
      f = i;
      d.Z1.row(g) = ds.Z.row(i);
      d.X1.row(g) = ds.Xg.row(i);
    } else if (ds.Z.row(i) != ds.Z.row(f) || ds.Xg.row(i) != ds.Xg.row(f)) {
      if (std::find(bad.begin(), bad.end(), g) == bad.end()) bad.push_back(g);
    }
  }
  if (std::find(first.begin(), first.end(), -1) != first.end()) {
    throw DataError("two-stage analysis: genotype without observations");
  }
  if (!bad.empty()) {
    std::sort(bad.begin(), bad.end());
    throw DataError(fmt::format("inconsistent marker or confounder rows within genotype(s): {}",
                                join_labels(ds, bad)));
  }
  return d;
}

StageOneResult stage_one_fit(const PhenotypeDataset& ds, const TwoStageDesign& design,
                             const RobustFitConfig& cfg) {
  const Index N = ds.n_obs();
  const Index G = design.eta.cols();
  if (design.eta.rows() != N) throw DataError("two-stage design does not match the dataset");

  // A genotype whose observations fill exactly one block is confounded with it.
  std::vector<Index> flagged;
  if (ds.n_blocks() > 1) {
    std::vector<Index> block_count(static_cast<std::size_t>(ds.n_blocks()), 0);
    for (Index b : ds.block_of) ++block_count[static_cast<std::size_t>(b)];
    std::vector<Index> geno_count(static_cast<std::size_t>(G), 0);
    std::vector<Index> geno_block(static_cast<std::size_t>(G), -1);
    for (Index i = 0; i < N; ++i) {
      const auto g = static_cast<std::size_t>(ds.genotype_of[static_cast<std::size_t>(i)]);
      const Index b = ds.block_of[static_cast<std::size_t>(i)];
      ++geno_count[g];
      geno_block[g] = (geno_block[g] == -1 || geno_block[g] == b) ? b : -2;
    }
    for (Index g = 0; g < G; ++g) {
      const Index b = geno_block[static_cast<std::size_t>(g)];
      if (b >= 0 && block_count[static_cast<std::size_t>(b)] == geno_count[static_cast<std::size_t>(g)]) {
        flagged.push_back(g);
      }
    }
  }
  if (!flagged.empty()) {
    throw DataError(fmt::format("stage one not identifiable: genotype(s) confounded with a block: {}",
                                join_labels(ds, flagged)));
  }
  if (N < G + 2) {
    throw DataError(fmt::format("stage one needs at least G + 2 = {} observations, got {}", G + 2, N));
  }

  RobustLmmProblem prob{ds.y, design.eta, {ds.Xb}};
  const auto fit = robust_lmm_fit(prob, cfg);
  StageOneResult s1;
  s1.mu_hat = fit.fixed;
  s1.u_b_hat = fit.random;
  s1.sigma2_b = ds.n_blocks() > 1 ? fit.sigma2_random[0] : 0.0;
  s1.sigma2_e = fit.sigma2_e;
  s1.diagnostics.iterations = fit.iterations;
  s1.diagnostics.converged = fit.converged;
  s1.diagnostics.objective = fit.sigma2_e;
  if (!fit.converged) s1.diagnostics.note = "stage one reached the iteration limit";
  return s1;
}

FitResult stage_two_fit(const PhenotypeDataset& ds, const TwoStageDesign& design,
                        const StageOneResult& s1, const StageTwoConfig& cfg) {
  const Index G = design.eta.cols();
  const Index p = design.X1.cols();
  if (s1.mu_hat.size() != G) throw DataError("stage-one means do not match the design");

  FitResult out;
  double s2g = 0.0;
  double s2r = 0.0;
  switch (cfg.method) {
    case StageTwoMethod::Mdpde:
    case StageTwoMethod::Classical: {
      DpdConfig dpd = cfg.dpd;
      if (cfg.method == StageTwoMethod::Classical) dpd.alpha = 0.0;
      const auto fit = mdpde_fit_generic(s1.mu_hat, design.Z1, design.X1, dpd);
      out.gamma_hat = fit.coef;
      s2g = fit.sigma2_random;
      s2r = fit.sigma2_resid;
      out.diagnostics.iterations = fit.iterations;
      out.diagnostics.objective = fit.objective;
      out.diagnostics.converged = fit.converged;
      out.method = cfg.method == StageTwoMethod::Classical ? "rob1" : fmt::format("mdpde2(alpha={})", dpd.alpha);
      break;
    }
    case StageTwoMethod::Huber: {
      if (p == 0) throw DataError("Huber stage two needs at least one marker");
      const auto fit = robust_lmm_fit({s1.mu_hat, design.Z1, {design.X1}}, cfg.huber);
      out.gamma_hat = fit.fixed;
      s2g = fit.sigma2_random[0];
      s2r = fit.sigma2_e;
      out.diagnostics.iterations = fit.iterations;
      out.diagnostics.objective = fit.sigma2_e;
      out.diagnostics.converged = fit.converged;
      out.method = "rob2";
      break;
    }
  }
  if (!out.diagnostics.converged) out.diagnostics.note = "stage two did not converge; best iterate returned";

  const double lambda = s2g > 0.0 ? std::min(s2r / s2g, kMaxLambda) : kMaxLambda;
  out.shrinkage = VectorXd::Constant(p, lambda);
  out.effects.u_g = p > 0 ? ridge_solution(design.Z1, design.X1, s1.mu_hat, out.shrinkage) : VectorXd();
  out.effects.u_b = s1.u_b_hat;
  out.block_shrinkage = s1.sigma2_b > 0.0 ? std::min(s1.sigma2_e / s1.sigma2_b, kMaxLambda) : kMaxLambda;

  out.variances.sigma2_g = s2g;
  out.variances.sigma2_b = s1.sigma2_b;
  out.variances.sigma2_e = s1.sigma2_e;
  out.variances.sigma2_u_total = total_genetic_variance(ds.Xg, s2g);
  out.breeding_values = breeding_values(ds, out.effects.u_g);
  out.fitted = predict(ds, out.gamma_hat, out.effects);
  out.heritability = heritability(out.variances.sigma2_u_total, s1.sigma2_e, ds.n_replicates());
  out.heritability_convention = "two-stage";
  out.stage_one = s1.diagnostics;
  return out;
}

FitResult two_stage_fit(const PhenotypeDataset& ds, const RobustFitConfig& stage_one,
                        const StageTwoConfig& stage_two) {
  const auto design = build_two_stage_design(ds);
  const auto s1 = stage_one_fit(ds, design, stage_one);
  return stage_two_fit(ds, design, s1, stage_two);
}

}  // namespace rgp
