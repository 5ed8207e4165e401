#pragma once

#include "rgp/dataset.hpp"

namespace rgp {

/// H_p = s2_g / (s2_g + s2_e / r). Throws DataError when both variances are
/// zero or r < 1.
double heritability(double sigma2_g, double sigma2_e, Index replicates);

/// Genetic variance of genotypic values implied by a homoscedastic per-marker
/// variance: s2_g times the summed marker column variances.
double total_genetic_variance(const MatrixXd& Xg, double sigma2_g);

/// Heteroscedastic counterpart: sum_j s2_gj var(x_j).
double total_genetic_variance(const MatrixXd& Xg, const VectorXd& sigma2_per_marker);

}  // namespace rgp
