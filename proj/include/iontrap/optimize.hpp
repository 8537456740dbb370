#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace iontrap {

/// Weighted residuals r(x); the objective is sum r_i^2.
using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmOptions {
    std::size_t max_iterations = 500;
    double objective_tolerance = 1e-10;  // relative change of the objective
    double step_tolerance = 1e-12;       // step norm in units of `scale`
    double fd_step = 1e-6;               // relative finite-difference step
    double initial_lambda = 1e-3;
};

struct LmResult {
    Eigen::VectorXd x;
    /// (J^T J)^-1 at the solution over the free parameters; fixed ones have zero rows/columns.
    Eigen::MatrixXd covariance;
    Eigen::VectorXd residuals;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    /// Objective after every accepted step, starting with the initial point.
    std::vector<double> history;
};

/// Central-difference Jacobian of f at x. Steps are fd_step * max(|x_j|, scale_j).
Eigen::MatrixXd numerical_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& scale, const std::vector<bool>& fixed,
                                   double fd_step);

/// Levenberg-Marquardt with diagonal (Marquardt) damping. Parameters flagged in
/// `fixed` stay at their start values. Throws ConvergenceError if the iteration
/// cap is reached.
LmResult levenberg_marquardt(const ResidualFunction& f, Eigen::VectorXd x0,
                             const Eigen::VectorXd& scale, const std::vector<bool>& fixed = {},
                             const LmOptions& options = {});

}  // namespace iontrap
