#include "featmatch/optimizer.hpp"

#include "featmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace featmatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
    try {
        const double v = f(x, g, h);
        if (!std::isfinite(v)) return kInf;
        if (g && !g->allFinite()) return kInf;
        if (h && !h->allFinite()) return kInf;
        return v;
    } catch (const Error&) {
        return kInf;
    }
}

double scaled_norm(const Eigen::VectorXd& g, double f) { return g.norm() / std::max(1.0, std::abs(f)); }

// Solve (H + lambda D) p = -g with D = diag(|H_ii|) floored; raises lambda until
// the system is positive definite. Returns false when no such lambda is found.
bool damped_step(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, double& lambda, Eigen::VectorXd& step) {
    const Eigen::Index n = g.size();
    Eigen::VectorXd d = h.diagonal().cwiseAbs();
    const double dmax = d.size() ? d.maxCoeff() : 0.0;
    const double floor = std::max(dmax * 1e-10, 1e-12);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = std::max(d[i], floor);
    for (int attempt = 0; attempt < 60; ++attempt) {
        Eigen::MatrixXd a = h;
        a.diagonal() += lambda * d;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            step = llt.solve(-g);
            if (step.allFinite()) return true;
        }
        lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
        if (lambda > 1e12) return false;
    }
    return false;
}

}  // namespace

NewtonResult newton_minimize(const Objective& f, Eigen::VectorXd x0, const NewtonOptions& options) {
    NewtonResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd g(n);
    Eigen::MatrixXd h(n, n);
    double fx = safe_eval(f, x0, &g, &h);
    if (!std::isfinite(fx)) throw InvalidArgument("newton_minimize: objective not finite at the starting point");
    res.x = std::move(x0);
    res.trace.push_back(fx);

    double lambda = 0.0;
    Eigen::VectorXd step(n);
    Eigen::VectorXd trial(n);
    Eigen::VectorXd g_new(n);
    Eigen::MatrixXd h_new(n, n);

    int it = 0;
    bool stalled = false;
    for (; it < options.max_iter && !stalled; ++it) {
        if (scaled_norm(g, fx) <= options.grad_tol) break;
        bool accepted = false;
        while (!accepted) {
            if (!damped_step(h, g, lambda, step)) break;
            double slope = g.dot(step);
            if (!(slope < 0.0)) {
                lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
                if (lambda > 1e12) break;
                continue;
            }
            const double predicted = -(slope + 0.5 * step.dot(h * step));
            double t = 1.0;
            double f_trial = kInf;
            for (int k = 0; k <= options.max_halvings; ++k) {
                trial = res.x + t * step;
                f_trial = safe_eval(f, trial, nullptr, nullptr);
                if (f_trial <= fx + options.armijo * t * slope) break;
                t *= 0.5;
                f_trial = kInf;
            }
            if (!std::isfinite(f_trial)) {
                lambda = lambda == 0.0 ? 1e-3 : lambda * 10.0;
                if (lambda > 1e12) break;
                continue;
            }
            const double actual = fx - f_trial;
            const double rho = predicted > 0.0 ? actual / predicted : 0.0;
            if (t == 1.0 && rho > 0.75) {
                lambda /= 3.0;
                if (lambda < 1e-10) lambda = 0.0;
            } else if (rho < 0.25) {
                lambda = lambda == 0.0 ? 1e-4 : lambda * 2.0;
            }
            const double fv = safe_eval(f, trial, &g_new, &h_new);
            if (!std::isfinite(fv)) {
                lambda = lambda == 0.0 ? 1e-3 : lambda * 10.0;
                if (lambda > 1e12) break;
                continue;
            }
            stalled = (res.x - trial).norm() <= 1e-15 * std::max(1.0, res.x.norm());
            res.x = trial;
            fx = fv;
            g = g_new;
            h = h_new;
            res.trace.push_back(fx);
            accepted = true;
        }
        if (!accepted) break;
    }
    res.value = fx;
    res.iterations = it;
    res.gradient_norm = scaled_norm(g, fx);
    res.converged = res.gradient_norm <= options.grad_tol;
    return res;
}

}  // namespace featmatch
