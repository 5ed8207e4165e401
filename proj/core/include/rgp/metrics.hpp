#pragma once

#include <Eigen/Dense>

namespace rgp {

/// Sample Pearson correlation. Throws DataError on length mismatch, fewer
/// than two entries or a constant input.
double pearson_rho(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

/// Median of |y - yhat|; for even lengths the mean of the two central values.
double mad(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

double median(Eigen::VectorXd v);

/// 1.4826 * median(|v - median(v)|), the normal-consistent scale estimate.
double mad_scale(const Eigen::VectorXd& v);

}  // namespace rgp
