#include "rgp/metrics.hpp"

#include "rgp/error.hpp"

#include <algorithm>
#include <cmath>

namespace rgp {

double median(Eigen::VectorXd v) {
  const auto n = v.size();
  if (n == 0) throw DataError("median of an empty vector");
  double* data = v.data();
  const auto mid = n / 2;
  std::nth_element(data, data + mid, data + n);
  const double upper = data[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(data, data + mid);
  return 0.5 * (lower + upper);
}

double mad_scale(const Eigen::VectorXd& v) {
  const double m = median(v);
  return 1.4826 * median((v.array() - m).abs().matrix());
}

double pearson_rho(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DataError("pearson_rho: length mismatch");
  if (y.size() < 2) throw DataError("pearson_rho: need at least two observations");
  const Eigen::ArrayXd a = y.array() - y.mean();
  const Eigen::ArrayXd b = yhat.array() - yhat.mean();
  const double saa = (a * a).sum();
  const double sbb = (b * b).sum();
  if (saa == 0.0 || sbb == 0.0) throw DataError("pearson_rho: constant input vector");
  const double rho = (a * b).sum() / std::sqrt(saa * sbb);
  return std::clamp(rho, -1.0, 1.0);
}

double mad(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DataError("mad: length mismatch");
  if (y.size() == 0) throw DataError("mad: empty input");
  return median((y - yhat).cwiseAbs());
}

}  // namespace rgp
