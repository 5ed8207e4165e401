#include "rgp/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <memory>

namespace rgp {

namespace {

constexpr double kInvalid = 1e100;

Eigen::Map<const Eigen::VectorXd> view(const gsl_vector* v) {
  // GSL vectors created here are contiguous (stride 1).
  return {v->data, static_cast<Eigen::Index>(v->size)};
}

struct GslVector {
  explicit GslVector(const Eigen::VectorXd& x) : v(gsl_vector_alloc(static_cast<size_t>(x.size()))) {
    for (Eigen::Index i = 0; i < x.size(); ++i) gsl_vector_set(v, static_cast<size_t>(i), x(i));
  }
  ~GslVector() { gsl_vector_free(v); }
  GslVector(const GslVector&) = delete;
  GslVector& operator=(const GslVector&) = delete;
  gsl_vector* v;
};

Eigen::VectorXd to_eigen(const gsl_vector* v) { return view(v); }

void disable_gsl_abort() {
  static const bool once = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)once;
}

}  // namespace

OptimizeResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& step, int max_iter, double size_tol,
                                double f_tol) {
  disable_gsl_abort();
  OptimizeResult result;
  const auto n = static_cast<size_t>(x0.size());
  if (n == 0) {
    result.x = x0;
    result.value = f(x0);
    result.converged = true;
    return result;
  }

  auto eval = [](const gsl_vector* x, void* params) -> double {
    const auto& fn = *static_cast<const Objective*>(params);
    const double v = fn(to_eigen(x));
    return std::isfinite(v) ? v : kInvalid;
  };
  gsl_multimin_function func{eval, n, const_cast<Objective*>(&f)};

  GslVector x(x0);
  GslVector s(step);
  std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n),
      gsl_multimin_fminimizer_free);
  gsl_multimin_fminimizer_set(m.get(), &func, x.v, s.v);

  int status = GSL_CONTINUE;
  int iter = 0;
  const int window = 20 * static_cast<int>(n + 1);
  double anchor = std::numeric_limits<double>::infinity();
  int anchor_iter = 0;
  while (status == GSL_CONTINUE && iter < max_iter) {
    ++iter;
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), size_tol);
    const double best = gsl_multimin_fminimizer_minimum(m.get());
    if (anchor - best > f_tol * (1.0 + std::abs(best))) {
      anchor = best;
      anchor_iter = iter;
    } else if (f_tol > 0.0 && iter - anchor_iter >= window && best < kInvalid) {
      status = GSL_SUCCESS;
    }
  }
  result.x = to_eigen(gsl_multimin_fminimizer_x(m.get()));
  result.value = gsl_multimin_fminimizer_minimum(m.get());
  result.iterations = iter;
  result.converged = status == GSL_SUCCESS;
  return result;
}

OptimizeResult minimize_bfgs(const DifferentiableObjective& f, const Eigen::VectorXd& x0,
                             int max_iter, double grad_tol, double initial_step) {
  disable_gsl_abort();
  OptimizeResult result;
  const auto n = static_cast<size_t>(x0.size());
  if (n == 0) {
    result.x = x0;
    result.value = f(x0, nullptr);
    result.converged = true;
    return result;
  }

  const auto* fn_ptr = &f;
  auto eval_f = [](const gsl_vector* x, void* params) -> double {
    const auto& fn = *static_cast<const DifferentiableObjective*>(params);
    const double v = fn(to_eigen(x), nullptr);
    return std::isfinite(v) ? v : kInvalid;
  };
  auto eval_df = [](const gsl_vector* x, void* params, gsl_vector* g) {
    const auto& fn = *static_cast<const DifferentiableObjective*>(params);
    Eigen::VectorXd grad;
    fn(to_eigen(x), &grad);
    for (size_t i = 0; i < g->size; ++i) {
      const double gi = grad(static_cast<Eigen::Index>(i));
      gsl_vector_set(g, i, std::isfinite(gi) ? gi : 0.0);
    }
  };
  auto eval_fdf = [](const gsl_vector* x, void* params, double* value, gsl_vector* g) {
    const auto& fn = *static_cast<const DifferentiableObjective*>(params);
    Eigen::VectorXd grad;
    const double v = fn(to_eigen(x), &grad);
    *value = std::isfinite(v) ? v : kInvalid;
    for (size_t i = 0; i < g->size; ++i) {
      const double gi = grad(static_cast<Eigen::Index>(i));
      gsl_vector_set(g, i, std::isfinite(gi) ? gi : 0.0);
    }
  };
  gsl_multimin_function_fdf func{eval_f, eval_df, eval_fdf, n,
                                 const_cast<DifferentiableObjective*>(fn_ptr)};

  GslVector x(x0);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> m(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n),
      gsl_multimin_fdfminimizer_free);
  gsl_multimin_fdfminimizer_set(m.get(), &func, x.v, initial_step, 0.1);

  int status = gsl_multimin_test_gradient(gsl_multimin_fdfminimizer_gradient(m.get()), grad_tol);
  int iter = 0;
  while (status == GSL_CONTINUE && iter < max_iter) {
    ++iter;
    if (gsl_multimin_fdfminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    status = gsl_multimin_test_gradient(gsl_multimin_fdfminimizer_gradient(m.get()), grad_tol);
  }
  result.x = to_eigen(gsl_multimin_fdfminimizer_x(m.get()));
  result.value = gsl_multimin_fdfminimizer_minimum(m.get());
  result.iterations = iter;
  result.converged = status == GSL_SUCCESS;
  return result;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + step;
    const double fp = f(xp);
    xp(i) = x(i) - step;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace rgp
