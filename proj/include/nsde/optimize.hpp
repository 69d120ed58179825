#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace nsde {

/// Objective returning f(x) and, when `grad` is non-null, writing the gradient.
/// A non-finite value marks x as infeasible; the line search backs away from it.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimizeOptions {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-8;  // on |projected gradient|_inf / (1 + |f|)
  std::size_t memory = 10;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double projected_gradient_norm = 0.0;
  std::vector<double> trace;  // objective after the start and after every accepted step
};

/// Box-constrained limited-memory quasi-Newton descent with a projected Armijo line
/// search. Variables sitting on a bound with the gradient pushing outward are frozen for
/// the iteration; the two-loop recursion runs on the remaining ones.
OptimizeResult minimize_box(const Objective& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, const OptimizeOptions& options = {});

/// Central differences, step 1e-6 * (1 + |x_k|).
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x);

/// Central second differences of f, step 1e-5 * (1 + |x_k|); symmetric by construction.
Eigen::MatrixXd numerical_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x);

/// Central differences of an analytic gradient, symmetrized.
Eigen::MatrixXd numerical_hessian_from_gradient(const Objective& objective, const Eigen::VectorXd& x);

/// Wraps a value-only function with finite-difference gradients.
Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f);

}  // namespace nsde
