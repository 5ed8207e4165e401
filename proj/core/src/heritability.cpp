#include "rgp/heritability.hpp"

#include "rgp/error.hpp"

#include <algorithm>
#include <cmath>

namespace rgp {

double heritability(double sigma2_g, double sigma2_e, Index replicates) {
  if (replicates < 1) throw DataError("replicate count must be at least 1");
  if (!(sigma2_g >= 0.0) || !(sigma2_e >= 0.0)) {
    throw DataError("variances must be nonnegative");
  }
  if (sigma2_g == 0.0 && sigma2_e == 0.0) throw DataError("undefined heritability");
  const double h = sigma2_g / (sigma2_g + sigma2_e / static_cast<double>(replicates));
  return std::clamp(h, 0.0, 1.0);
}

double total_genetic_variance(const MatrixXd& Xg, double sigma2_g) {
  return sigma2_g * marker_variance_scale(Xg);
}

double total_genetic_variance(const MatrixXd& Xg, const VectorXd& sigma2_per_marker) {
  if (Xg.rows() < 2 || Xg.cols() == 0) return 0.0;
  const VectorXd mean = Xg.colwise().mean();
  double total = 0.0;
  for (Index j = 0; j < Xg.cols(); ++j) {
    const double var =
        (Xg.col(j).array() - mean(j)).square().sum() / static_cast<double>(Xg.rows() - 1);
    total += var * sigma2_per_marker(j);
  }
  return total;
}

}  // namespace rgp
