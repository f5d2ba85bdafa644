#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace pgev::optim {

/// Objective to minimize. Returns f(x) and, when `grad` is non-null, writes
/// the gradient into it. Infeasible points return +inf; the line search
/// treats them as rejected steps.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iterations = 500;
  /// Converged when the gradient infinity-norm drops to this value.
  double gradient_tolerance = 1e-6;
  /// Newton steps on a finite-difference Hessian tried after BFGS stalls
  /// above the gradient tolerance.
  int polish_steps = 8;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options = {});

/// Central-difference Hessian of an analytic gradient, symmetrized.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                double relative_step = 1e-5);

/// Wraps a value-only function with a central-difference gradient.
Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f,
                                double relative_step = 1e-6);

}  // namespace pgev::optim
