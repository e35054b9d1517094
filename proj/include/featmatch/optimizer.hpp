#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace featmatch {

/// Objective callback. Must return the value and, when the pointers are non-null,
/// fill the gradient and Hessian. A non-finite value (or a thrown featmatch::Error)
/// marks the point as infeasible; the line search then backs off.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess)>;

struct NewtonOptions {
    int max_iter = 200;
    /// Convergence when ||grad||_2 / max(1, |f|) falls below this.
    double grad_tol = 1e-8;
    int max_halvings = 30;
    double armijo = 1e-4;
};

struct NewtonResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;  ///< scaled as in NewtonOptions::grad_tol
    std::vector<double> trace;   ///< objective after every accepted step, start included
};

/// Damped Newton minimisation. The Hessian is regularised as H + lambda diag(|H_ii|)
/// whenever it is not positive definite, lambda adapts by the ratio of actual to
/// predicted decrease, and every step is accepted only after Armijo backtracking.
/// Accepted steps never increase the objective.
NewtonResult newton_minimize(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& options = {});

}  // namespace featmatch
