#include "iontrap/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "iontrap/error.hpp"

namespace iontrap {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

bool is_fixed(const std::vector<bool>& fixed, Eigen::Index j) {
    return !fixed.empty() && fixed[static_cast<std::size_t>(j)];
}

}  // namespace

Eigen::MatrixXd numerical_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& scale, const std::vector<bool>& fixed,
                                   double fd_step) {
    Eigen::MatrixXd jac;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (is_fixed(fixed, j)) continue;
        const double h = fd_step * std::max(std::abs(x[j]), scale[j]);
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const Eigen::VectorXd rp = f(xp);
        const Eigen::VectorXd rm = f(xm);
        if (jac.size() == 0) jac = Eigen::MatrixXd::Zero(rp.size(), x.size());
        jac.col(j) = (rp - rm) / (xp[j] - xm[j]);
    }
    if (jac.size() == 0) jac = Eigen::MatrixXd::Zero(f(x).size(), x.size());
    return jac;
}

LmResult levenberg_marquardt(const ResidualFunction& f, Eigen::VectorXd x0,
                             const Eigen::VectorXd& scale, const std::vector<bool>& fixed,
                             const LmOptions& options) {
    const Eigen::Index n = x0.size();
    if (scale.size() != n) throw DomainError("levenberg_marquardt: scale has the wrong size");
    if (!fixed.empty() && fixed.size() != static_cast<std::size_t>(n))
        throw DomainError("levenberg_marquardt: fixed mask has the wrong size");

    LmResult out;
    out.x = std::move(x0);
    out.residuals = f(out.x);
    if (!all_finite(out.residuals)) throw NumericalError("levenberg_marquardt: non-finite start point");
    out.objective = out.residuals.squaredNorm();
    out.history.push_back(out.objective);
    double lambda = options.initial_lambda;

    while (!out.converged) {
        if (out.iterations >= options.max_iterations)
            throw ConvergenceError("levenberg_marquardt: no convergence after " +
                                   std::to_string(options.max_iterations) + " iterations");
        ++out.iterations;
        if (out.objective == 0.0) {
            out.converged = true;
            break;
        }
        // Work in units of `scale` so the normal matrix stays well conditioned.
        const Eigen::MatrixXd jac =
            numerical_jacobian(f, out.x, scale, fixed, options.fd_step) * scale.asDiagonal();
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * out.residuals;
        const double diag_floor = 1e-30 * std::max(a.diagonal().maxCoeff(), 1e-300);

        while (true) {
            Eigen::MatrixXd damped = a;
            Eigen::VectorXd rhs = -g;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (is_fixed(fixed, j)) {
                    damped.row(j).setZero();
                    damped.col(j).setZero();
                    damped(j, j) = 1.0;
                    rhs[j] = 0.0;
                } else {
                    damped(j, j) += lambda * std::max(a(j, j), diag_floor);
                }
            }
            const Eigen::VectorXd scaled = damped.ldlt().solve(rhs);
            const Eigen::VectorXd step = scaled.cwiseProduct(scale);
            const double step_norm = scaled.norm();
            const Eigen::VectorXd trial = out.x + step;
            const Eigen::VectorXd r_trial = f(trial);
            const double obj_trial = all_finite(r_trial) ? r_trial.squaredNorm() : HUGE_VAL;
            if (all_finite(step) && obj_trial < out.objective) {
                const double change = (out.objective - obj_trial) / out.objective;
                out.x = trial;
                out.residuals = r_trial;
                out.objective = obj_trial;
                out.history.push_back(obj_trial);
                lambda = std::max(lambda / 10.0, 1e-12);
                if (change < options.objective_tolerance || step_norm < options.step_tolerance)
                    out.converged = true;
                break;
            }
            lambda *= 10.0;
            if (!(step_norm >= options.step_tolerance) || lambda > 1e16) {
                out.converged = true;
                break;
            }
        }
    }

    const Eigen::MatrixXd jac = numerical_jacobian(f, out.x, scale, fixed, options.fd_step);
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < n; ++j)
        if (!is_fixed(fixed, j)) free.push_back(j);
    out.covariance = Eigen::MatrixXd::Zero(n, n);
    if (!free.empty()) {
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd jf(jac.rows(), m);
        for (Eigen::Index k = 0; k < m; ++k) jf.col(k) = jac.col(free[k]) * scale[free[k]];
        const Eigen::MatrixXd info = jf.transpose() * jf;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
        Eigen::MatrixXd cov;
        if (lu.isInvertible()) {
            cov = lu.inverse();
            for (Eigen::Index a = 0; a < m; ++a)
                for (Eigen::Index b = 0; b < m; ++b) cov(a, b) *= scale[free[a]] * scale[free[b]];
        } else
            cov = Eigen::MatrixXd::Constant(m, m, std::numeric_limits<double>::infinity());
        for (Eigen::Index a = 0; a < m; ++a)
            for (Eigen::Index b = 0; b < m; ++b) out.covariance(free[a], free[b]) = cov(a, b);
    }
    return out;
}

}  // namespace iontrap
