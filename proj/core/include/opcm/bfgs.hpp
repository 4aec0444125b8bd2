#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace opcm {

/// Objective for minimization: returns f(x) and writes the gradient into
/// `grad` when it is non-null.
using GradientFunction = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iters = 250;
  /// Stop when the gradient infinity norm falls below this.
  double grad_tol = 1e-6;
  /// Stop when an accepted step improves f by less than f_tol * max(1, |f|).
  double f_tol = 1e-12;
  /// Infinity-norm length of the first trial step.
  double initial_step = 1.0;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

enum class BfgsStop { gradient_tolerance, function_tolerance, max_iterations, line_search_failure };

std::string_view to_string(BfgsStop stop);

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  /// f at the initial point followed by f at every accepted iterate.
  std::vector<double> trace;
  int iterations = 0;
  int evaluations = 0;
  BfgsStop stop = BfgsStop::max_iterations;
};

/// Dense BFGS with a strong-Wolfe line search. Returns the best point seen,
/// which is the last accepted iterate since accepted steps satisfy sufficient
/// decrease. When the Wolfe search fails but found a sufficient-decrease
/// point, that point is accepted and the curvature update is skipped.
BfgsResult minimize_bfgs(const GradientFunction& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options = {});

}  // namespace opcm
