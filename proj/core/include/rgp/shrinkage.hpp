#pragma once

#include "rgp/dataset.hpp"
#include "rgp/mme.hpp"

#include <vector>

namespace rgp {

/// One-way ANOVA of y grouped by the levels of a single marker.
struct AnovaSummary {
  double mqm = 0.0;  ///< between-level mean square, SSB / (k - 1)
  double mqe = 0.0;  ///< within-level mean square, SSW / (N - k)
  double ssb = 0.0;
  double ssw = 0.0;
  double sst = 0.0;
  std::vector<Index> group_sizes;  ///< nonempty levels only
  bool constant = false;           ///< single level: no information about the marker
};

AnovaSummary anova_per_marker(const PhenotypeDataset& ds, Index j);

struct RmlaResult {
  VectorXd lambda;       ///< per-marker shrinkage
  VectorXd sigma2_star;  ///< floored moment estimates
  bool no_signal = false;  ///< every moment estimate was at the floor
};

/// Moment estimates (MQM - MQE) / (0.5 (N - sum n_i^2 / N)) and
/// lambda_j = (s2_e / s2_u) * sum_j s2*_j / s2*_j, with s2_e and
/// s2_u = p * s2_g taken from the homoscedastic base fit.
RmlaResult rmla_shrinkage(const PhenotypeDataset& ds, const VarianceComponents& base);

struct RmlvOptions {
  int max_iter = 50;
  double tol = 1e-5;
  /// Use (u_j^2 - s2_e C_jj) / j instead of the EM update u_j^2 + s2_e C_jj.
  bool literal_update = false;
};

struct RmlvResult {
  VectorXd lambda;  ///< per-marker shrinkage
  double block_lambda = 0.0;
  VarianceComponents vc;
  MmeSolution solution;  ///< solved with the returned lambda
  int iterations = 0;
  bool converged = false;
};

/// EM-type iteration of per-marker variances around Henderson's equations.
RmlvResult rmlv_fit(const PhenotypeDataset& ds, const VarianceComponents& base,
                    const RmlvOptions& opts = {});

}  // namespace rgp
