#include "featmatch/estimators.hpp"

#include "featmatch/errors.hpp"
#include "featmatch/features.hpp"
#include "featmatch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

namespace featmatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonconstant(std::span<const double> y) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*lo == *hi) throw SingularSystem("singular design: the series is constant");
}

// Least squares with rank check.
Eigen::VectorXd solve_ls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-12);
    if (qr.rank() < x.cols()) throw SingularSystem(std::string(what) + ": singular design");
    return qr.solve(y);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Susceptible offsets C_t with S_t = S0 + C_t.
std::vector<double> sir_offsets(const ModelSpec& model, std::span<const double> infected) {
    std::vector<double> c(infected.size(), 0.0);
    for (std::size_t t = 1; t < infected.size(); ++t) {
        c[t] = c[t - 1] + model.sir().birth(static_cast<std::int64_t>(t) - 1) - infected[t];
    }
    return c;
}

// Per-regime OLS for a fixed SETAR threshold and delay. Returns RSS (inf when a
// regime has too few points to be identified).
double setar_ols(std::span<const double> y, int k, int d, double c, std::vector<double>& theta) {
    const int p = std::max(k, d);
    const auto n = static_cast<int>(y.size());
    std::array<std::vector<int>, 2> rows;
    for (int t = p; t < n; ++t) rows[y[static_cast<std::size_t>(t - d)] <= c ? 0 : 1].push_back(t);
    theta.assign(static_cast<std::size_t>(2 * k + 4), 0.0);
    theta[static_cast<std::size_t>(2 * k + 2)] = c;
    theta[static_cast<std::size_t>(2 * k + 3)] = d;
    double rss = 0.0;
    for (int r = 0; r < 2; ++r) {
        const auto& idx = rows[static_cast<std::size_t>(r)];
        if (static_cast<int>(idx.size()) < k + 2) return kInf;
        Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), k + 1);
        Eigen::VectorXd z(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const int t = idx[i];
            const auto ii = static_cast<Eigen::Index>(i);
            x(ii, 0) = 1.0;
            for (int j = 1; j <= k; ++j) x(ii, j) = y[static_cast<std::size_t>(t - j)];
            z[ii] = y[static_cast<std::size_t>(t)];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        qr.setThreshold(1e-12);
        if (qr.rank() < k + 1) return kInf;
        const Eigen::VectorXd b = qr.solve(z);
        rss += (z - x * b).squaredNorm();
        const int off = r == 0 ? 0 : k + 1;
        for (int j = 0; j <= k; ++j) theta[static_cast<std::size_t>(off + j)] = b[j];
    }
    return rss;
}

std::vector<double> threshold_grid(std::span<const double> y, const FitOptions& options) {
    if (!(options.threshold_trim >= 0.0 && options.threshold_trim < 0.5)) {
        throw InvalidArgument("SETAR: threshold_trim must lie in [0, 0.5)");
    }
    std::vector<double> sorted(y.begin(), y.end());
    std::sort(sorted.begin(), sorted.end());
    const double last = static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(options.threshold_trim * last));
    const auto hi = static_cast<std::size_t>(std::ceil((1.0 - options.threshold_trim) * last));
    std::vector<double> out;
    for (std::size_t i = lo; i < hi && i + 1 < sorted.size(); ++i) {
        if (sorted[i] == sorted[i + 1]) continue;
        out.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    }
    return out;
}

// Variable projection start for Blowfly: (N0, alpha) on a grid, (c, nu) linear.
std::vector<double> blowfly_start(const ModelSpec& model, std::span<const double> y) {
    const int tau = model.delay();
    const int p = model.order_p();
    const auto n = static_cast<int>(y.size());
    double scale = 0.0;
    for (double v : y) scale += std::abs(v);
    scale = std::max(scale / static_cast<double>(y.size()), 1e-8);
    double best = kInf;
    std::vector<double> theta = model.theta();
    const int rows = n - p;
    Eigen::MatrixXd x(rows, 2);
    Eigen::VectorXd z(rows);
    for (int a = 0; a <= 40; ++a) {
        const double n0 = scale * std::pow(10.0, -1.5 + 3.0 * a / 40.0);
        for (int b = 0; b <= 30; ++b) {
            const double alpha = 0.05 + 2.0 * b / 30.0;
            for (int t = p; t < n; ++t) {
                const double u = y[static_cast<std::size_t>(t - tau)];
                const auto i = static_cast<Eigen::Index>(t - p);
                x(i, 0) = u > 0.0 ? std::pow(u, alpha) * std::exp(-u / n0) : 0.0;
                x(i, 1) = y[static_cast<std::size_t>(t - 1)];
                z[i] = y[static_cast<std::size_t>(t)];
            }
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
            if (qr.rank() < 2) continue;
            const Eigen::VectorXd coef = qr.solve(z);
            const double rss = (z - x * coef).squaredNorm();
            if (rss < best) {
                best = rss;
                theta = {coef[0], n0, coef[1], alpha};
            }
        }
    }
    if (!std::isfinite(best)) throw SingularSystem("Blowfly: no identifiable starting point");
    return theta;
}

struct SmoothRun {
    NewtonResult newton;
    std::vector<double> theta;
};

// Damped Newton over the smooth parameters of `model`, starting at `start`.
SmoothRun newton_smooth(const ModelSpec& model, std::span<const double> y, const std::vector<double>& w,
                        const std::vector<double>& start, const NewtonOptions& options) {
    const auto mask = model.smooth_mask();
    std::vector<int> free;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) free.push_back(static_cast<int>(i));
    const auto nf = static_cast<Eigen::Index>(free.size());
    const ModelSpec base = model.with_theta(start);
    Objective obj = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
        std::vector<double> th = start;
        for (Eigen::Index i = 0; i < nf; ++i) th[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])] = z[i];
        const ModelSpec mdl = base.with_theta(std::move(th));
        const auto full = ape_objective(mdl, y, w, h ? 2 : (g ? 1 : 0));
        if (g) {
            g->resize(nf);
            for (Eigen::Index i = 0; i < nf; ++i) (*g)[i] = full.grad[free[static_cast<std::size_t>(i)]];
        }
        if (h) {
            h->resize(nf, nf);
            for (Eigen::Index i = 0; i < nf; ++i)
                for (Eigen::Index j = 0; j < nf; ++j)
                    (*h)(i, j) = full.hess(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
        }
        return full.value;
    };
    Eigen::VectorXd z0(nf);
    for (Eigen::Index i = 0; i < nf; ++i) z0[i] = start[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])];
    SmoothRun run;
    run.newton = newton_minimize(obj, z0, options);
    run.theta = start;
    for (Eigen::Index i = 0; i < nf; ++i)
        run.theta[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])] = run.newton.x[i];
    return run;
}

double objective_at(const ModelSpec& model, std::span<const double> y, const std::vector<double>& w,
                    const std::vector<double>& theta) {
    try {
        const double v = ape_objective(model.with_theta(theta), y, w, 0).value;
        return std::isfinite(v) ? v : kInf;
    } catch (const Error&) {
        return kInf;
    }
}

// Newton from `start` plus Gaussian restarts around it; the best objective wins and a
// restart replaces the incumbent only when it improves by more than 1e-12 relative.
SmoothRun multistart(const ModelSpec& model, std::span<const double> y, const std::vector<double>& w,
                     const std::vector<double>& start, const FitOptions& options, int& restarts_used,
                     std::uint64_t cell) {
    SmoothRun best = newton_smooth(model, y, w, start, options.newton);
    const auto mask = model.smooth_mask();
    restarts_used = 0;
    for (int r = 1; r <= options.restarts; ++r) {
        Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r), cell));
        std::vector<double> th = start;
        for (std::size_t i = 0; i < th.size(); ++i) {
            if (!mask[i]) continue;
            th[i] += options.restart_rel_sd * std::max(std::abs(start[i]), 0.1) * rng.normal();
        }
        ++restarts_used;
        if (!std::isfinite(objective_at(model, y, w, th))) continue;
        SmoothRun run;
        try {
            run = newton_smooth(model, y, w, th, options.newton);
        } catch (const Error&) {
            continue;
        }
        const double tol = 1e-12 * std::max(1.0, std::abs(best.newton.value));
        if (run.newton.value < best.newton.value - tol) best = std::move(run);
    }
    return best;
}

FitResult to_fit_result(std::string name, int m, const SmoothRun& run, int restarts_used,
                        const std::vector<double>& w) {
    FitResult fr;
    fr.estimator = std::move(name);
    fr.m = m;
    fr.theta_hat = run.theta;
    fr.objective_value = run.newton.value;
    fr.iterations = run.newton.iterations;
    fr.converged = run.newton.converged;
    fr.gradient_norm = run.newton.gradient_norm;
    fr.restarts_used = restarts_used;
    fr.objective_trace = run.newton.trace;
    fr.weights = w;
    return fr;
}

// Closed-form one-step fits; nullopt for families that need the iterative route.
std::optional<std::vector<double>> closed_form_lse(const ModelSpec& model, std::span<const double> y,
                                                   const FitOptions& options) {
    const auto n = static_cast<int>(y.size());
    switch (model.family()) {
        case ModelFamily::LinearAR: {
            const int p = model.order_p();
            Eigen::MatrixXd x(n - p, p);
            Eigen::VectorXd z(n - p);
            for (int t = p; t < n; ++t) {
                for (int i = 1; i <= p; ++i) x(t - p, i - 1) = y[static_cast<std::size_t>(t - i)];
                z[t - p] = y[static_cast<std::size_t>(t)];
            }
            return to_std(solve_ls(x, z, "LinearAR least squares"));
        }
        case ModelFamily::QuadMap: {
            Eigen::MatrixXd x(n - 1, 2);
            Eigen::VectorXd z(n - 1);
            for (int t = 1; t < n; ++t) {
                const double v = y[static_cast<std::size_t>(t - 1)];
                x(t - 1, 0) = v;
                x(t - 1, 1) = v * v;
                z[t - 1] = y[static_cast<std::size_t>(t)];
            }
            return to_std(solve_ls(x, z, "QuadMap least squares"));
        }
        case ModelFamily::SETAR: {
            const int k = model.regime_order();
            const int d = model.delay();
            double best = kInf;
            std::vector<double> best_theta;
            std::vector<double> th;
            for (double c : threshold_grid(y, options)) {
                const double rss = setar_ols(y, k, d, c, th);
                if (rss < best) {
                    best = rss;
                    best_theta = th;
                }
            }
            if (!std::isfinite(best)) throw SingularSystem("SETAR least squares: no threshold leaves both regimes identified");
            return best_theta;
        }
        default:
            return std::nullopt;
    }
}

void check_length(const ModelSpec& model, std::span<const double> y) {
    const auto need = static_cast<std::size_t>(model.order_p()) + model.num_params();
    if (y.size() <= need) throw InvalidArgument("fit: series too short for the model (need length > order_p + #params)");
}

FitResult linear_system_result(std::string name, int m, std::vector<double> theta) {
    FitResult fr;
    fr.estimator = std::move(name);
    fr.m = m;
    fr.theta_hat = std::move(theta);
    fr.converged = true;
    return fr;
}

}  // namespace

std::string_view to_string(WeightKind kind) noexcept {
    switch (kind) {
        case WeightKind::OneHot: return "one-hot";
        case WeightKind::AbsAcf: return "abs-acf";
        case WeightKind::ConstantPeriods: return "constant-periods";
        case WeightKind::Uniform: return "uniform";
    }
    return "unknown";
}

WeightKind parse_weight_kind(std::string_view name) {
    if (name == "one-hot") return WeightKind::OneHot;
    if (name == "abs-acf") return WeightKind::AbsAcf;
    if (name == "constant-periods") return WeightKind::ConstantPeriods;
    if (name == "uniform") return WeightKind::Uniform;
    throw InvalidArgument("unknown weight scheme '" + std::string(name) + "'");
}

WeightScheme one_hot_weights(int m0, int m) {
    if (m < 1) throw InvalidArgument("weights: m must be >= 1");
    if (m0 < 1 || m0 > m) throw InvalidArgument("weights: one-hot index must lie in 1..m");
    WeightScheme ws;
    ws.kind = WeightKind::OneHot;
    ws.one_hot_index = m0;
    ws.w.assign(static_cast<std::size_t>(m), 0.0);
    ws.w[static_cast<std::size_t>(m0 - 1)] = 1.0;
    return ws;
}

WeightScheme uniform_weights(int m) {
    if (m < 1) throw InvalidArgument("weights: m must be >= 1");
    WeightScheme ws;
    ws.kind = WeightKind::Uniform;
    ws.w.assign(static_cast<std::size_t>(m), 1.0 / m);
    return ws;
}

WeightScheme make_weights(const WeightRequest& request, const TimeSeries& data, int m) {
    if (m < 1) throw InvalidArgument("weights: m must be >= 1");
    switch (request.kind) {
        case WeightKind::OneHot: return one_hot_weights(request.one_hot_index, m);
        case WeightKind::Uniform: return uniform_weights(m);
        case WeightKind::AbsAcf: {
            const auto lag = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(m), data.size() - 1));
            const auto acf = sample_acf(data, lag);
            WeightScheme ws;
            ws.kind = WeightKind::AbsAcf;
            ws.w.assign(static_cast<std::size_t>(m), 0.0);
            double total = 0.0;
            for (std::size_t k = 1; k <= lag; ++k) {
                ws.w[k - 1] = std::abs(acf.r[k]);
                total += ws.w[k - 1];
            }
            if (!(total > 0.0)) {
                auto u = uniform_weights(m);
                u.kind = WeightKind::AbsAcf;
                return u;
            }
            for (double& v : ws.w) v /= total;
            return ws;
        }
        case WeightKind::ConstantPeriods: {
            if (request.n_periods < 1) throw InvalidArgument("weights: n_periods must be >= 1");
            WeightScheme ws;
            ws.kind = WeightKind::ConstantPeriods;
            ws.n_periods = request.n_periods;
            ws.w.assign(static_cast<std::size_t>(m), 0.0);
            int span = m;
            if (data.size() >= 8) {
                if (const auto period = cycle_period(data)) {
                    span = std::clamp(static_cast<int>(std::lround(request.n_periods * *period)), 1, m);
                }
            }
            for (int k = 0; k < span; ++k) ws.w[static_cast<std::size_t>(k)] = 1.0 / span;
            return ws;
        }
    }
    throw InvalidArgument("weights: unknown kind");
}

ApeObjective ape_objective(const ModelSpec& model, std::span<const double> y, const std::vector<double>& w, int order) {
    const int q = static_cast<int>(model.num_params());
    const int m = static_cast<int>(w.size());
    const auto n = static_cast<int>(y.size());
    ApeObjective out;
    if (order >= 1) out.grad.setZero(q);
    if (order >= 2) out.hess.setZero(q, q);
    const bool sir = model.family() == ModelFamily::DiscreteSIR;
    const int p = model.order_p();
    std::vector<double> offsets;
    if (sir) offsets = sir_offsets(model, y);
    const double s0 = sir ? model.theta().back() : 0.0;

    for (int o = p - 1; o <= n - 2; ++o) {
        const int steps = std::min(m, n - 1 - o);
        int last = 0;
        for (int k = steps; k >= 1; --k)
            if (w[static_cast<std::size_t>(k - 1)] != 0.0) {
                last = k;
                break;
            }
        if (last == 0) continue;
        std::array<double, 2> sir_hist{};
        std::span<const double> hist;
        if (sir) {
            sir_hist = {y[static_cast<std::size_t>(o)], s0 + offsets[static_cast<std::size_t>(o)]};
            hist = sir_hist;
        } else {
            hist = y.subspan(static_cast<std::size_t>(o - p + 1), static_cast<std::size_t>(p));
        }
        const auto path = skeleton_path(model, hist, last, order, TiePolicy::Subgradient, o);
        for (int k = 1; k <= last; ++k) {
            const double wk = w[static_cast<std::size_t>(k - 1)];
            if (wk == 0.0) continue;
            const double e = y[static_cast<std::size_t>(o + k)] - path.value[static_cast<std::size_t>(k - 1)];
            out.value += wk * e * e;
            if (order >= 1) {
                Eigen::Map<const Eigen::VectorXd> g(path.grad.data() + static_cast<std::size_t>((k - 1) * q), q);
                out.grad.noalias() -= 2.0 * wk * e * g;
                if (order >= 2) {
                    Eigen::Map<const Eigen::MatrixXd> h(path.hess.data() + static_cast<std::size_t>((k - 1) * q * q), q, q);
                    out.hess.noalias() += 2.0 * wk * (g * g.transpose() - e * h);
                }
            }
        }
    }
    if (!std::isfinite(out.value)) throw ExplosiveSimulation("APE objective is not finite");
    return out;
}

FitResult fit_lse(const ModelSpec& model, const TimeSeries& data, const FitOptions& options) {
    const auto y = data.values();
    check_length(model, y);
    require_nonconstant(y);
    const std::vector<double> w{1.0};
    if (auto closed = closed_form_lse(model, y, options)) {
        SmoothRun run;
        run.theta = *closed;
        const auto obj = ape_objective(model.with_theta(run.theta), y, w, 1);
        const auto mask = model.smooth_mask();
        Eigen::VectorXd g(obj.grad.size());
        Eigen::Index nf = 0;
        for (Eigen::Index i = 0; i < obj.grad.size(); ++i)
            if (mask[static_cast<std::size_t>(i)]) g[nf++] = obj.grad[i];
        run.newton.value = obj.value;
        run.newton.gradient_norm = g.head(nf).norm() / std::max(1.0, std::abs(obj.value));
        run.newton.converged = true;
        run.newton.trace = {obj.value};
        return to_fit_result("lse", 1, run, 0, w);
    }
    std::vector<double> start;
    if (options.start) {
        start = *options.start;
    } else if (model.family() == ModelFamily::Blowfly) {
        start = blowfly_start(model, y);
    } else {
        start = sir_initial_estimate(model, data);
    }
    int used = 0;
    const auto run = multistart(model, y, w, start, options, used, 1);
    return to_fit_result("lse", 1, run, used, w);
}

FitResult fit_ape(const ModelSpec& model, const TimeSeries& data, int m, const WeightScheme& weights,
                  const FitOptions& options) {
    if (m < 1) throw InvalidArgument("fit_ape: m must be >= 1");
    if (weights.m() != m) throw InvalidArgument("fit_ape: weights must be defined for k = 1..m");
    const auto y = data.values();
    check_length(model, y);
    require_nonconstant(y);
    const auto& w = weights.w;
    const std::uint64_t cell = 1000 + static_cast<std::uint64_t>(m);

    if (model.family() == ModelFamily::SETAR && !options.start) {
        const int k = model.regime_order();
        const int d = model.delay();
        std::vector<std::pair<double, std::vector<double>>> ranked;
        std::vector<double> th;
        for (double c : threshold_grid(y, options)) {
            if (!std::isfinite(setar_ols(y, k, d, c, th))) continue;
            const double v = objective_at(model, y, w, th);
            if (std::isfinite(v)) ranked.emplace_back(v, th);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        if (static_cast<int>(ranked.size()) > options.threshold_starts) {
            ranked.resize(static_cast<std::size_t>(std::max(1, options.threshold_starts)));
        }
        SmoothRun best;
        best.newton.value = kInf;
        std::vector<double> best_start;
        for (const auto& [v, start] : ranked) {
            SmoothRun run;
            try {
                run = newton_smooth(model, y, w, start, options.newton);
            } catch (const Error&) {
                continue;
            }
            if (run.newton.value < best.newton.value) {
                best = std::move(run);
                best_start = start;
            }
        }
        if (!std::isfinite(best.newton.value)) {
            throw SingularSystem("SETAR: no threshold leaves both regimes identified");
        }
        int used = 0;
        if (options.refine_threshold && options.restarts > 0) {
            FitOptions o = options;
            auto again = multistart(model, y, w, best_start, o, used, cell);
            const double tol = 1e-12 * std::max(1.0, std::abs(best.newton.value));
            if (again.newton.value < best.newton.value - tol) best = std::move(again);
        }
        return to_fit_result("ape", m, best, used, w);
    }

    std::vector<double> start;
    if (options.start) {
        start = *options.start;
    } else {
        FitOptions lse_options = options;
        start = fit_lse(model, data, lse_options).theta_hat;
    }
    int used = 0;
    auto run = multistart(model, y, w, start, options, used, cell);

    // The one-step optimum can sit in a different basin from the multi-step one; the
    // variable-projection grid supplies extra Blowfly starts.
    if (model.family() == ModelFamily::Blowfly && m > 1 && !options.start) {
        const auto grid_start = blowfly_start(model, y);
        if (std::isfinite(objective_at(model, y, w, grid_start))) {
            try {
                auto alt = newton_smooth(model, y, w, grid_start, options.newton);
                const double tol = 1e-12 * std::max(1.0, std::abs(run.newton.value));
                if (alt.newton.value < run.newton.value - tol) run = std::move(alt);
            } catch (const Error&) {
            }
        }
    }
    return to_fit_result("ape", m, run, used, w);
}

std::vector<double> lagged_yule_walker(std::span<const double> gamma, int p, int first_lag, int last_lag) {
    if (p < 1 || first_lag < 1 || last_lag < first_lag) throw InvalidArgument("Yule-Walker: invalid lag range");
    if (static_cast<int>(gamma.size()) <= last_lag) throw InvalidArgument("Yule-Walker: autocovariances too short");
    const int rows = last_lag - first_lag + 1;
    if (rows < p) throw InvalidArgument("Yule-Walker: fewer equations than parameters");
    Eigen::MatrixXd a(rows, p);
    Eigen::VectorXd b(rows);
    for (int r = 0; r < rows; ++r) {
        const int j = first_lag + r;
        for (int i = 1; i <= p; ++i) a(r, i - 1) = gamma[static_cast<std::size_t>(std::abs(j - i))];
        b[r] = gamma[static_cast<std::size_t>(j)];
    }
    const double scale = std::max(std::abs(gamma[0]), 1e-300);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a / scale);
    qr.setThreshold(1e-12);
    if (gamma[0] == 0.0 || qr.rank() < p) throw SingularSystem("Yule-Walker: singular system");
    return to_std(qr.solve(b / scale));
}

std::vector<double> ayw_from_acv(std::span<const double> gamma, int p, int m) {
    if (m < p) throw InvalidArgument("AYW: m must be >= p");
    return lagged_yule_walker(gamma, p, 1, m);
}

FitResult fit_ayw(const TimeSeries& data, int p, int m) {
    if (p < 1) throw InvalidArgument("AYW: p must be >= 1");
    if (m < p) throw InvalidArgument("AYW: m must be >= p");
    if (static_cast<int>(data.size()) <= m + p) throw InvalidArgument("AYW: series too short (need length > m + p)");
    const auto acf = sample_acf(data, static_cast<std::size_t>(m));
    return linear_system_result("ayw", m, ayw_from_acv(acf.gamma, p, m));
}

FitResult fit_yule_walker(const TimeSeries& data, int p) {
    auto fr = fit_ayw(data, p, p);
    fr.estimator = "yule-walker";
    return fr;
}

FitResult fit_walker(const TimeSeries& data, int p, int ell) {
    if (p < 1 || ell < 1) throw InvalidArgument("Walker: p and ell must be >= 1");
    const int last = 2 * p + ell - 1;
    if (static_cast<int>(data.size()) <= last) throw InvalidArgument("Walker: series too short for the lag range");
    const auto acf = sample_acf(data, static_cast<std::size_t>(last));
    return linear_system_result("walker", ell, lagged_yule_walker(acf.gamma, p, p + ell, last));
}

namespace {

double whittle_eval(const Spectrum& per, std::span<const double> theta, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
    const auto p = static_cast<int>(theta.size());
    const auto n = static_cast<double>(per.freqs.size());
    double s = 0.0;
    double logsum = 0.0;
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2s = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd dl = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd d2l = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd da(p);
    Eigen::MatrixXd d2a(p, p);
    for (std::size_t j = 0; j < per.freqs.size(); ++j) {
        const double w = per.freqs[j];
        std::complex<double> a(1.0, 0.0);
        for (int l = 1; l <= p; ++l) a -= theta[static_cast<std::size_t>(l - 1)] * std::polar(1.0, -w * l);
        const double a2 = std::norm(a);
        if (!(a2 > 0.0)) return kInf;
        s += per.power[j] * a2;
        logsum += std::log(a2);
        if (grad) {
            // d|A|^2/dtheta_l = -2 Re(conj(A) e^{-iwl})
            for (int l = 1; l <= p; ++l) da[l - 1] = -2.0 * std::real(std::conj(a) * std::polar(1.0, -w * l));
            ds += per.power[j] * da;
            dl += da / a2;
            if (hess) {
                for (int l = 1; l <= p; ++l)
                    for (int k = 1; k <= p; ++k) d2a(l - 1, k - 1) = 2.0 * std::cos(w * (l - k));
                d2s += per.power[j] * d2a;
                d2l += d2a / a2 - da * da.transpose() / (a2 * a2);
            }
        }
    }
    s /= n;
    if (!(s > 0.0)) return kInf;
    if (grad) {
        ds /= n;
        *grad = n * ds / s - dl;
        if (hess) {
            d2s /= n;
            *hess = n * (d2s / s - ds * ds.transpose() / (s * s)) - d2l;
        }
    }
    return n * std::log(s) - logsum + n;
}

}  // namespace

double whittle_objective(const Spectrum& per, std::span<const double> theta) {
    return whittle_eval(per, theta, nullptr, nullptr);
}

bool reflect_to_stationary(std::vector<double>& theta) {
    const auto phi = companion_matrix(theta);
    Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(phi);
    Eigen::VectorXcd roots = es.eigenvalues();
    bool moved = false;
    for (Eigen::Index i = 0; i < roots.size(); ++i) {
        const double r = std::abs(roots[i]);
        if (r >= 1.0 - 1e-8) {
            const double target = std::min(1.0 / r, 1.0 - 1e-6);
            roots[i] *= target / r;
            moved = true;
        }
    }
    if (!moved) return false;
    // prod (z - root_i) = z^p - theta_1 z^{p-1} - ... - theta_p
    std::vector<std::complex<double>> c{1.0};
    for (Eigen::Index i = 0; i < roots.size(); ++i) {
        std::vector<std::complex<double>> nc(c.size() + 1, 0.0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            nc[k] += c[k];
            nc[k + 1] -= c[k] * roots[i];
        }
        c = std::move(nc);
    }
    for (std::size_t l = 1; l < c.size(); ++l) theta[l - 1] = -c[l].real();
    return true;
}

FitResult fit_whittle(const TimeSeries& data, int p, const FitOptions& options) {
    if (p < 1) throw InvalidArgument("Whittle: p must be >= 1");
    require_nonconstant(data.values());
    const auto per = periodogram(data);
    std::vector<double> start;
    try {
        start = fit_yule_walker(data, p).theta_hat;
    } catch (const SingularSystem&) {
        start.assign(static_cast<std::size_t>(p), 0.0);
    }
    reflect_to_stationary(start);
    Objective obj = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g, Eigen::MatrixXd* h) {
        return whittle_eval(per, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), g, h);
    };
    const auto res = newton_minimize(obj, Eigen::Map<const Eigen::VectorXd>(start.data(), p), options.newton);
    FitResult fr;
    fr.estimator = "whittle";
    fr.m = 0;
    fr.theta_hat = to_std(res.x);
    fr.objective_value = res.value;
    fr.iterations = res.iterations;
    fr.converged = res.converged;
    fr.gradient_norm = res.gradient_norm;
    fr.objective_trace = res.trace;
    if (reflect_to_stationary(fr.theta_hat)) {
        fr.converged = false;
        fr.objective_value = whittle_objective(per, fr.theta_hat);
    }
    return fr;
}

int select_order_aic(const TimeSeries& data, int p_max) {
    const auto y = data.values();
    const auto n = static_cast<int>(y.size());
    if (p_max < 1 || 4 * p_max >= n) throw InvalidArgument("AIC: need 1 <= p_max < length / 4");
    require_nonconstant(y);
    const int rows = n - p_max;
    Eigen::VectorXd z(rows);
    for (int t = p_max; t < n; ++t) z[t - p_max] = y[static_cast<std::size_t>(t)];
    int best_p = 1;
    double best = kInf;
    for (int p = 1; p <= p_max; ++p) {
        Eigen::MatrixXd x(rows, p);
        for (int t = p_max; t < n; ++t)
            for (int i = 1; i <= p; ++i) x(t - p_max, i - 1) = y[static_cast<std::size_t>(t - i)];
        const auto b = solve_ls(x, z, "AIC order selection");
        const double s2 = (z - x * b).squaredNorm() / rows;
        const double aic = rows * std::log(s2) + 2.0 * p;
        if (aic < best) {
            best = aic;
            best_p = p;
        }
    }
    return best_p;
}

std::vector<double> sir_initial_estimate(const ModelSpec& model, const TimeSeries& data) {
    if (model.family() != ModelFamily::DiscreteSIR) throw InvalidArgument("sir_initial_estimate: not a DiscreteSIR model");
    const auto y = data.values();
    const auto n = static_cast<int>(y.size());
    const int seasons = model.sir().season_length;
    if (n < 2 * seasons + 2) throw InvalidArgument("DiscreteSIR: series too short for seasonal fitting");
    const auto c = sir_offsets(model, y);
    const double cmin = *std::min_element(c.begin(), c.end());
    double mean_i = std::accumulate(y.begin(), y.end(), 0.0) / n;
    mean_i = std::max(mean_i, 1.0);

    std::vector<double> betas(static_cast<std::size_t>(seasons));
    auto rss_at = [&](double s0, std::vector<double>* out) {
        std::vector<double> sxy(static_cast<std::size_t>(seasons), 0.0);
        std::vector<double> sxx(static_cast<std::size_t>(seasons), 0.0);
        for (int t = 0; t + 1 < n; ++t) {
            const auto k = static_cast<std::size_t>(t % seasons);
            const double x = (s0 + c[static_cast<std::size_t>(t)]) * y[static_cast<std::size_t>(t)];
            sxy[k] += x * y[static_cast<std::size_t>(t + 1)];
            sxx[k] += x * x;
        }
        std::vector<double> e(static_cast<std::size_t>(seasons));
        for (std::size_t k = 0; k < e.size(); ++k) {
            e[k] = sxx[k] > 0.0 ? std::max(sxy[k] / sxx[k], 1e-300) : 1e-300;
        }
        double rss = 0.0;
        for (int t = 0; t + 1 < n; ++t) {
            const auto k = static_cast<std::size_t>(t % seasons);
            const double x = (s0 + c[static_cast<std::size_t>(t)]) * y[static_cast<std::size_t>(t)];
            const double r = y[static_cast<std::size_t>(t + 1)] - e[k] * x;
            rss += r * r;
        }
        if (out) {
            out->resize(e.size());
            for (std::size_t k = 0; k < e.size(); ++k) (*out)[k] = std::log(e[k]);
        }
        return rss;
    };
    const double base = std::max(0.0, -cmin);
    // log-offset grid then golden-section refinement
    double best_a = 0.0;
    double best = kInf;
    const double lo_a = std::log(mean_i) - 3.0 * std::log(10.0);
    const double hi_a = std::log(mean_i) + 6.0 * std::log(10.0);
    const int grid = 181;
    for (int i = 0; i < grid; ++i) {
        const double a = lo_a + (hi_a - lo_a) * i / (grid - 1);
        const double r = rss_at(base + std::exp(a), nullptr);
        if (r < best) {
            best = r;
            best_a = a;
        }
    }
    const double step = (hi_a - lo_a) / (grid - 1);
    double a = best_a - step;
    double b = best_a + step;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = rss_at(base + std::exp(x1), nullptr);
    double f2 = rss_at(base + std::exp(x2), nullptr);
    for (int it = 0; it < 100; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = rss_at(base + std::exp(x1), nullptr);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = rss_at(base + std::exp(x2), nullptr);
        }
    }
    const double s0 = base + std::exp(0.5 * (a + b));
    rss_at(s0, &betas);
    if (!model.sir().base_betas.empty()) return {1.0, s0};
    betas.push_back(s0);
    return betas;
}

}  // namespace featmatch
