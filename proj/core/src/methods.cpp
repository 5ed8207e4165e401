#include "rgp/methods.hpp"

#include "rgp/csv.hpp"
#include "rgp/error.hpp"
#include "rgp/heritability.hpp"
#include "rgp/mme.hpp"
#include "rgp/two_stage.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace rgp {

namespace {

struct NamedKind {
  const char* name;
  MethodKind kind;
};

constexpr NamedKind kKinds[] = {
    {"rmla", MethodKind::Rmla},       {"rmlv", MethodKind::Rmlv},   {"rob-rmla", MethodKind::RobRmla},
    {"rob-rmlv", MethodKind::RobRmlv}, {"mdpde1", MethodKind::Mdpde1}, {"rob1", MethodKind::Rob1},
    {"rob2", MethodKind::Rob2},       {"mdpde2", MethodKind::Mdpde2},
};

constexpr double kMaxLambda = 1e15;

VarianceComponents base_variances(const PhenotypeDataset& ds, bool robust, const MethodOptions& opts,
                                  FitDiagnostics& diag) {
  if (robust) {
    const auto base = robust_onestage_base(ds, opts.robust);
    diag.iterations = base.fit.iterations;
    diag.converged = base.fit.converged;
    return base.vc;
  }
  DpdConfig mle = opts.dpd;
  mle.alpha = 0.0;
  const auto base = mdpde_fit_onestage(ds, mle);
  diag = base.diagnostics;
  return base.variances;
}

void finish_heteroscedastic(const PhenotypeDataset& ds, const MmeSolution& sol, FitResult& out) {
  const Index p = ds.n_markers();
  out.gamma_hat = sol.gamma_hat;
  out.effects.u_g = sol.u_hat.head(p);
  out.effects.u_b = sol.u_hat.tail(ds.n_blocks());
  VectorXd per_marker = (out.variances.sigma2_e / out.shrinkage.array()).matrix();
  out.variances.sigma2_g = p > 0 ? per_marker.mean() : 0.0;
  out.variances.sigma2_u_total = total_genetic_variance(ds.Xg, per_marker);
  out.variances.sigma2_g_per_marker = std::move(per_marker);
  out.breeding_values = breeding_values(ds, out.effects.u_g);
  out.fitted = predict(ds, out.gamma_hat, out.effects);
  out.heritability = heritability(out.variances.sigma2_u_total, out.variances.sigma2_e, ds.n_replicates());
  out.heritability_convention = "heteroscedastic";
}

FitResult fit_rmla(const PhenotypeDataset& ds, bool robust, const MethodOptions& opts) {
  FitResult out;
  const auto base = base_variances(ds, robust, opts, out.diagnostics);
  const auto rm = rmla_shrinkage(ds, base);
  out.shrinkage = rm.lambda;
  out.block_shrinkage = base.sigma2_b > 0.0 ? std::min(base.sigma2_e / base.sigma2_b, kMaxLambda) : kMaxLambda;
  out.variances.sigma2_e = base.sigma2_e;
  out.variances.sigma2_b = base.sigma2_b;
  const auto sol = solve_mme(ds, shrinkage_diagonal(rm.lambda, ds.n_blocks(), out.block_shrinkage));
  finish_heteroscedastic(ds, sol, out);
  if (rm.no_signal) out.diagnostics.note = "no marker variance signal";
  return out;
}

FitResult fit_rmlv(const PhenotypeDataset& ds, bool robust, const MethodOptions& opts) {
  FitResult out;
  FitDiagnostics base_diag;
  const auto base = base_variances(ds, robust, opts, base_diag);
  const auto rv = rmlv_fit(ds, base, opts.rmlv);
  out.shrinkage = rv.lambda;
  out.block_shrinkage = rv.block_lambda;
  out.variances.sigma2_e = rv.vc.sigma2_e;
  out.variances.sigma2_b = rv.vc.sigma2_b;
  finish_heteroscedastic(ds, rv.solution, out);
  out.diagnostics.iterations = rv.iterations;
  out.diagnostics.converged = rv.converged;
  out.diagnostics.objective = rv.vc.sigma2_e;
  if (!rv.converged) out.diagnostics.note = "EM iteration limit reached";
  return out;
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& text, std::optional<double> alpha) {
  std::string name(csv::trim(text));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (const auto colon = name.find(':'); colon != std::string::npos) {
    if (alpha) throw DataError(fmt::format("alpha given twice for method '{}'", text));
    alpha = csv::parse_double(name.substr(colon + 1), "alpha");
    name.resize(colon);
  }
  MethodSpec spec;
  if (name == "mle") {
    if (alpha && *alpha != 0.0) throw DataError("method 'mle' takes no alpha");
    spec.kind = MethodKind::Mdpde1;
    spec.alpha = 0.0;
    return spec;
  }
  const auto* it = std::find_if(std::begin(kKinds), std::end(kKinds),
                                [&](const NamedKind& k) { return name == k.name; });
  if (it == std::end(kKinds)) throw DataError(fmt::format("unknown method '{}'", text));
  spec.kind = it->kind;
  if (spec.has_alpha()) {
    if (!alpha) throw DataError(fmt::format("method '{}' requires alpha", name));
    if (!(*alpha >= 0.0) || !std::isfinite(*alpha)) throw DataError("alpha must be a finite value >= 0");
    spec.alpha = *alpha;
  } else if (alpha) {
    throw DataError(fmt::format("method '{}' takes no alpha", name));
  }
  return spec;
}

std::string MethodSpec::name() const {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

std::string MethodSpec::label() const {
  if (kind == MethodKind::Mdpde1 && alpha == 0.0) return "mle";
  return has_alpha() ? fmt::format("{}(alpha={})", name(), alpha) : name();
}

std::vector<MethodSpec> parse_method_list(const std::string& text) {
  std::vector<MethodSpec> out;
  for (const auto& item : csv::split(text)) {
    if (!csv::trim(item).empty()) out.push_back(MethodSpec::parse(item));
  }
  if (out.empty()) throw DataError("empty method list");
  return out;
}

FitResult fit_method(const PhenotypeDataset& ds, const MethodSpec& spec, const MethodOptions& opts) {
  FitResult out;
  switch (spec.kind) {
    case MethodKind::Rmla: out = fit_rmla(ds, false, opts); break;
    case MethodKind::RobRmla: out = fit_rmla(ds, true, opts); break;
    case MethodKind::Rmlv: out = fit_rmlv(ds, false, opts); break;
    case MethodKind::RobRmlv: out = fit_rmlv(ds, true, opts); break;
    case MethodKind::Mdpde1: {
      DpdConfig dpd = opts.dpd;
      dpd.alpha = spec.alpha;
      out = mdpde_fit_onestage(ds, dpd);
      break;
    }
    case MethodKind::Rob1:
    case MethodKind::Rob2:
    case MethodKind::Mdpde2: {
      StageTwoConfig s2;
      s2.dpd = opts.dpd;
      s2.dpd.alpha = spec.alpha;
      s2.huber = opts.robust;
      s2.method = spec.kind == MethodKind::Rob1   ? StageTwoMethod::Classical
                  : spec.kind == MethodKind::Rob2 ? StageTwoMethod::Huber
                                                  : StageTwoMethod::Mdpde;
      out = two_stage_fit(ds, opts.robust, s2);
      break;
    }
  }
  out.method = spec.label();
  return out;
}

VectorXd predict_dataset(const FitResult& fit, const PhenotypeDataset& ds,
                         const std::vector<bool>& known_blocks) {
  if (fit.gamma_hat.size() != ds.n_fixed() || fit.effects.u_g.size() != ds.n_markers() ||
      fit.effects.u_b.size() != ds.n_blocks()) {
    throw DataError("fitted model does not match the dataset columns");
  }
  RandomEffects u = fit.effects;
  if (!known_blocks.empty()) {
    if (static_cast<Index>(known_blocks.size()) != ds.n_blocks()) throw DataError("block mask size mismatch");
    for (Index b = 0; b < ds.n_blocks(); ++b) {
      if (!known_blocks[static_cast<std::size_t>(b)]) u.u_b(b) = 0.0;
    }
  }
  return predict(ds, fit.gamma_hat, u);
}

}  // namespace rgp
