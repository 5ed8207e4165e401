#pragma once

#include <Eigen/Dense>

#include <functional>

namespace rgp {

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
/// Returns f(x); fills *grad when non-null.
using DifferentiableObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

/// Nelder-Mead simplex (GSL nmsimplex2). Stops when the characteristic
/// simplex size drops below size_tol, or when the best value has improved by
/// less than f_tol * (1 + |f|) over the last 20 (n + 1) iterations.
/// Non-finite values count as +huge.
OptimizeResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& step, int max_iter, double size_tol,
                                double f_tol = 0.0);

/// BFGS (GSL vector_bfgs2) with the supplied gradient.
OptimizeResult minimize_bfgs(const DifferentiableObjective& f, const Eigen::VectorXd& x0,
                             int max_iter, double grad_tol, double initial_step = 0.1);

/// Central finite-difference gradient with relative step h.
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5);

}  // namespace rgp
