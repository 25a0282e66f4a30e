#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace lerkit {

struct LevMarOptions {
    int max_iterations = 200;
    double cost_tol = 1e-12;   // relative cost change
    double step_tol = 1e-12;   // step norm relative to parameter norm
    double initial_lambda = 1e-3;
};

struct LevMarResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1, s^2 = SSR/(m-n)
    double cost = 0.0;           // sum of squared residuals at the optimum
    double rms = 0.0;            // sqrt(cost/m)
    int iterations = 0;
    bool converged = false;
};

// Dense damped least squares (Marquardt scaling of the normal equations)
// with a forward-difference Jacobian. Small problems only: the fits in
// this library have <= 8 parameters and a few thousand residuals.
class LevMar {
public:
    using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

    explicit LevMar(ResidualFn fn, LevMarOptions opts = {})
        : fn_(std::move(fn)), opts_(opts) {}

    LevMarResult minimize(Eigen::VectorXd theta) const {
        const int n = static_cast<int>(theta.size());
        Eigen::VectorXd r = fn_(theta);
        double cost = r.squaredNorm();
        double lambda = opts_.initial_lambda;
        double nu = 2.0;

        LevMarResult out;
        out.converged = false;
        Eigen::MatrixXd jac = jacobian(theta, r);

        int it = 0;
        for (; it < opts_.max_iterations; ++it) {
            const Eigen::MatrixXd jtj = jac.transpose() * jac;
            const Eigen::VectorXd jtr = jac.transpose() * r;

            Eigen::VectorXd damping(n);
            for (int k = 0; k < n; ++k) damping[k] = std::max(jtj(k, k), 1e-30);
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += lambda * damping;

            const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
            if (!step.allFinite()) {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }

            const Eigen::VectorXd trial = theta + step;
            const Eigen::VectorXd r_trial = fn_(trial);
            const double cost_trial = r_trial.squaredNorm();

            const double predicted = step.dot(lambda * damping.cwiseProduct(step) - jtr);
            const double rho = predicted > 0.0 ? (cost - cost_trial) / predicted : (cost - cost_trial);

            if (cost_trial < cost && std::isfinite(cost_trial)) {
                const double rel_drop = (cost - cost_trial) / std::max(cost, 1e-300);
                const double step_rel = step.norm() / (theta.norm() + 1e-300);
                theta = trial;
                r = r_trial;
                cost = cost_trial;
                lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3.0));
                lambda = std::max(lambda, 1e-14);
                nu = 2.0;
                jac = jacobian(theta, r);
                if (rel_drop < opts_.cost_tol || step_rel < opts_.step_tol) {
                    out.converged = true;
                    ++it;
                    break;
                }
            } else {
                lambda *= nu;
                nu *= 2.0;
                // A rejected step that is already negligibly small means
                // the current point cannot be improved at this scale.
                if (step.norm() / (theta.norm() + 1e-300) < opts_.step_tol) {
                    out.converged = true;
                    ++it;
                    break;
                }
                if (lambda > 1e14) break;  // stuck
            }
        }

        out.params = theta;
        out.cost = cost;
        out.rms = std::sqrt(cost / std::max<std::ptrdiff_t>(r.size(), 1));
        out.iterations = it;
        out.covariance = covariance(jac, cost, static_cast<int>(r.size()), n);
        return out;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& r0) const {
        const int n = static_cast<int>(theta.size());
        const int m = static_cast<int>(r0.size());
        (void)r0;
        Eigen::MatrixXd jac(m, n);
        Eigen::VectorXd t = theta;
        for (int j = 0; j < n; ++j) {
            // Central differences; callers use O(1) parametrizations, so
            // an absolute floor keeps the step out of round-off.
            const double h = 3e-6 * std::max(std::abs(theta[j]), 1.0);
            t[j] = theta[j] + h;
            const Eigen::VectorXd rp = fn_(t);
            t[j] = theta[j] - h;
            jac.col(j) = (rp - fn_(t)) / (2.0 * h);
            t[j] = theta[j];
        }
        return jac;
    }

    static Eigen::MatrixXd covariance(const Eigen::MatrixXd& jac, double cost, int m, int n) {
        const double dof = std::max(m - n, 1);
        const double s2 = cost / dof;
        // SVD-based pseudo-inverse keeps near-degenerate fits finite.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double cutoff = sv.size() ? sv(0) * 1e-13 : 0.0;
        Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(sv.size());
        for (int i = 0; i < sv.size(); ++i)
            inv2(i) = sv(i) > cutoff ? 1.0 / (sv(i) * sv(i)) : 0.0;
        return s2 * svd.matrixV() * inv2.asDiagonal() * svd.matrixV().transpose();
    }

private:
    ResidualFn fn_;
    LevMarOptions opts_;
};

} // namespace lerkit
