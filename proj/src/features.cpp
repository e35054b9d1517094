#include "featmatch/features.hpp"

#include "featmatch/errors.hpp"
#include "featmatch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace featmatch {

double acf_match_error(std::span<const double> r_y, std::span<const double> r_x, int n_lags) {
    if (n_lags < 1) throw InvalidArgument("acf_match_error: N must be >= 1");
    const auto need = static_cast<std::size_t>(n_lags) + 1;
    if (r_y.size() < need || r_x.size() < need) throw InvalidArgument("acf_match_error: ACF shorter than N lags");
    double s = 0.0;
    for (std::size_t k = 0; k < need; ++k) {
        const double d = r_y[k] - r_x[k];
        s += d * d;
    }
    return std::sqrt(s / n_lags);
}

double acf_match_error(const AcfEstimate& y, const AcfEstimate& x, int n_lags) {
    return acf_match_error(y.r, x.r, n_lags);
}

double acf_match_error(const TimeSeries& y, const TimeSeries& x, int n_lags) {
    if (n_lags < 1) throw InvalidArgument("acf_match_error: N must be >= 1");
    const auto lag = static_cast<std::size_t>(n_lags);
    if (lag >= y.size() || lag >= x.size()) throw InvalidArgument("acf_match_error: N exceeds series length");
    return acf_match_error(sample_acf(y, lag), sample_acf(x, lag), n_lags);
}

PathMatch path_match_error(std::span<const double> y, std::span<const double> x, int shift_max) {
    if (shift_max < 0) throw InvalidArgument("path_match_error: shift_max must be >= 0");
    if (y.empty()) throw InvalidArgument("path_match_error: empty series");
    if (x.size() < y.size() + static_cast<std::size_t>(shift_max)) {
        throw InvalidArgument("path_match_error: orbit shorter than length(y) + shift_max");
    }
    PathMatch best{std::numeric_limits<double>::infinity(), 0};
    for (int k = 0; k <= shift_max; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t < y.size(); ++t) s += std::abs(y[t] - x[t + static_cast<std::size_t>(k)]);
        s /= static_cast<double>(y.size());
        if (s < best.error) best = {s, k};
    }
    return best;
}

double d_c_distance(std::span<const double> gamma_y, std::span<const double> gamma_x, std::span<const double> w) {
    if (gamma_y.size() != gamma_x.size() || w.size() != gamma_y.size()) {
        throw InvalidArgument("d_c_distance: autocovariances and weights must share one length");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double d = gamma_x[k] - gamma_y[k];
        s += w[k] * d * d;
    }
    return s;
}

double d_c_sup(std::span<const double> gamma_y, std::span<const double> gamma_x) {
    if (gamma_y.size() != gamma_x.size() || gamma_y.empty()) {
        throw InvalidArgument("d_c_sup: autocovariances must share one nonzero length");
    }
    double best = 0.0;
    for (std::size_t k = 0; k < gamma_y.size(); ++k) {
        const double d = gamma_x[k] - gamma_y[k];
        best = std::max(best, d * d);
    }
    return best;
}

namespace {

// Piecewise-linear interpolation, flat beyond the ends.
double interpolate(const Spectrum& s, double w) {
    const auto& f = s.freqs;
    if (w <= f.front()) return s.power.front();
    if (w >= f.back()) return s.power.back();
    const auto it = std::upper_bound(f.begin(), f.end(), w);
    const auto i = static_cast<std::size_t>(it - f.begin());
    const double t = (w - f[i - 1]) / (f[i] - f[i - 1]);
    return s.power[i - 1] + t * (s.power[i] - s.power[i - 1]);
}

void check_spectrum(const Spectrum& s, const char* name) {
    if (s.freqs.empty() || s.freqs.size() != s.power.size()) {
        throw InvalidArgument(std::string("d_f: malformed spectrum ") + name);
    }
}

}  // namespace

double d_f_itakura_saito(const Spectrum& f_y, const Spectrum& f_x) {
    check_spectrum(f_y, "f_y");
    check_spectrum(f_x, "f_x");
    const Spectrum& grid = f_y.freqs.size() >= f_x.freqs.size() ? f_y : f_x;
    const bool same = f_y.freqs == f_x.freqs;
    std::vector<double> nodes;
    std::vector<double> vals;
    nodes.reserve(grid.freqs.size() + 2);
    auto integrand = [&](std::size_t i, double w) {
        const double fy = same ? f_y.power[i] : interpolate(f_y, w);
        const double fx = same ? f_x.power[i] : interpolate(f_x, w);
        if (!(fx > 0.0)) throw InvalidArgument("d_f: nonpositive f_x ordinate");
        if (!(fy > 0.0)) throw InvalidArgument("d_f: nonpositive f_y ordinate");
        const double u = fy / fx;
        return u - std::log(u) - 1.0;
    };
    for (std::size_t i = 0; i < grid.freqs.size(); ++i) {
        nodes.push_back(grid.freqs[i]);
        vals.push_back(integrand(i, grid.freqs[i]));
    }
    // Flat extension to 0 and pi.
    double s = vals.front() * nodes.front();
    for (std::size_t i = 1; i < nodes.size(); ++i) s += 0.5 * (vals[i] + vals[i - 1]) * (nodes[i] - nodes[i - 1]);
    s += vals.back() * (std::numbers::pi - nodes.back());
    return 2.0 * s;
}

Spectrum ar_spectral_density(std::span<const double> theta, double sigma2, std::span<const double> freqs) {
    Spectrum out;
    out.kind = SpectrumKind::ModelTheoretical;
    out.freqs.assign(freqs.begin(), freqs.end());
    out.power.resize(freqs.size());
    for (std::size_t j = 0; j < freqs.size(); ++j) {
        std::complex<double> a(1.0, 0.0);
        for (std::size_t l = 1; l <= theta.size(); ++l) {
            a -= theta[l - 1] * std::polar(1.0, -freqs[j] * static_cast<double>(l));
        }
        out.power[j] = sigma2 / (2.0 * std::numbers::pi * std::norm(a));
    }
    return out;
}

std::optional<double> cycle_period(const TimeSeries& series, const CycleOptions& options) {
    if (series.size() < 8) throw InvalidArgument("cycle_period: series too short");
    const auto raw = periodogram(series);
    const auto sm = smoothed_sdf(raw, options.bandwidth);
    const double limit = options.max_freq_fraction * std::numbers::pi;
    std::vector<double> band;
    std::size_t best = 0;
    double peak = -1.0;
    for (std::size_t j = 0; j < sm.freqs.size() && sm.freqs[j] < limit; ++j) {
        band.push_back(sm.power[j]);
        if (sm.power[j] > peak) {
            peak = sm.power[j];
            best = j;
        }
    }
    if (band.size() < 3) return std::nullopt;
    std::nth_element(band.begin(), band.begin() + static_cast<std::ptrdiff_t>(band.size() / 2), band.end());
    const double median = band[band.size() / 2];
    if (!(peak > 0.0) || peak < options.min_peak_ratio * median) return std::nullopt;
    // The raw ordinate with most power under the smoothing window locates the peak.
    const std::size_t half = static_cast<std::size_t>(options.bandwidth / 2);
    const std::size_t lo = best >= half ? best - half : 0;
    const std::size_t hi = std::min(best + half, raw.freqs.size() - 1);
    std::size_t arg = best;
    for (std::size_t j = lo; j <= hi; ++j)
        if (raw.power[j] > raw.power[arg]) arg = j;
    return 2.0 * std::numbers::pi / raw.freqs[arg];
}

std::optional<double> cycle_period(const ModelSpec& model, std::span<const double> init,
                                   const LimitCycleOptions& options) {
    const auto orbit = limit_cycle(model, init, options);
    if (!orbit.converged || !orbit.period) return std::nullopt;
    return static_cast<double>(*orbit.period);
}

bool stability_check(const ModelSpec& model, double lo, double hi, std::uint64_t seed) {
    if (model.family() == ModelFamily::LinearAR) {
        const auto phi = companion_matrix(model.theta());
        Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(phi);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            if (!(std::abs(es.eigenvalues()[i]) < 1.0 - 1e-8)) return false;
        }
        return true;
    }
    Rng rng(seed);
    const std::size_t dim = model.family() == ModelFamily::DiscreteSIR ? 2 : static_cast<std::size_t>(model.order_p());
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> init(dim);
        for (double& v : init) v = rng.uniform(lo, hi);
        try {
            if (!limit_cycle(model, init).converged) return false;
        } catch (const Error&) {
            return false;
        }
    }
    return true;
}

namespace {

Eigen::MatrixXd gamma_block(std::span<const double> gamma, int rows, int p) {
    Eigen::MatrixXd g(rows, p);
    for (int j = 1; j <= rows; ++j)
        for (int i = 1; i <= p; ++i) g(j - 1, i - 1) = gamma[static_cast<std::size_t>(std::abs(j - i))];
    return g;
}

}  // namespace

std::vector<double> theorem_b_bias(std::span<const double> theta, std::span<const double> gamma, double s2, int m,
                                   int sign) {
    const auto p = static_cast<int>(theta.size());
    if (p < 1 || m < p) throw InvalidArgument("theorem_b_bias: need 1 <= p <= m");
    if (static_cast<int>(gamma.size()) < m + p) throw InvalidArgument("theorem_b_bias: gamma must reach lag m + p - 1");
    if (s2 < 0.0) throw InvalidArgument("theorem_b_bias: sigma_eta^2 must be >= 0");
    if (sign != 1 && sign != -1) throw InvalidArgument("theorem_b_bias: sign must be +1 or -1");
    const Eigen::MatrixXd gm = gamma_block(gamma, m, p);
    Eigen::MatrixXd gpp(p, p);
    for (int i = 0; i < p; ++i)
        for (int l = 0; l < p; ++l) gpp(i, l) = gamma[static_cast<std::size_t>(std::abs(i - l))];
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
    const Eigen::MatrixXd mat = gm.transpose() * gm + 2.0 * s2 * gpp + s2 * s2 * eye;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(mat);
    if (!lu.isInvertible()) throw SingularSystem("theorem_b_bias: singular matrix");
    const Eigen::Map<const Eigen::VectorXd> th(theta.data(), p);
    const Eigen::VectorXd bias = sign * s2 * lu.solve((gpp + s2 * eye) * th);
    return {bias.data(), bias.data() + p};
}

std::vector<double> theorem_b_limit(std::span<const double> gamma, double s2, int p, int m) {
    if (p < 1 || m < p) throw InvalidArgument("theorem_b_limit: need 1 <= p <= m");
    if (static_cast<int>(gamma.size()) <= m) throw InvalidArgument("theorem_b_limit: gamma must reach lag m");
    // Population normal equations of the noisy system, solved independently of the
    // sample estimator's QR route.
    std::vector<double> gy(gamma.begin(), gamma.end());
    gy[0] += s2;
    const Eigen::MatrixXd a = gamma_block(gy, m, p);
    Eigen::VectorXd b(m);
    for (int j = 1; j <= m; ++j) b[j - 1] = gy[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd ata = a.transpose() * a;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("theorem_b_limit: singular matrix");
    const Eigen::VectorXd x = ldlt.solve(a.transpose() * b);
    return {x.data(), x.data() + p};
}

double q_tilde_ar1(double beta, double theta, double gamma0, int max_m) {
    if (max_m < 1) throw InvalidArgument("q_tilde_ar1: max_m must be >= 1");
    double best = 0.0;
    for (int k = 1; k <= max_m; ++k) {
        const double d = std::pow(beta, k) - std::pow(theta, k);
        best = std::max(best, gamma0 * d * d);
    }
    return best;
}

std::vector<double> skeleton_attractor(const ModelSpec& model, std::span<const double> init, int burn_in,
                                       std::size_t length) {
    const auto burn = static_cast<std::size_t>(burn_in);
    const auto orbit = skeleton_orbit(model, init, burn + length);
    // skeleton_orbit reports the initial state(s) first.
    const std::size_t lead = model.family() == ModelFamily::DiscreteSIR ? 1 : init.size();
    const std::size_t start = std::min(orbit.size(), lead + burn);
    const std::size_t stop = std::min(orbit.size(), start + length);
    return {orbit.begin() + static_cast<std::ptrdiff_t>(start), orbit.begin() + static_cast<std::ptrdiff_t>(stop)};
}

FeatureReport compute_features(const TimeSeries& data, const ModelSpec& model, const FeatureOptions& options,
                               std::span<const double> init) {
    FeatureReport rep;
    const auto y = data.values();
    const auto n = data.size();
    std::vector<double> start;
    if (model.family() == ModelFamily::DiscreteSIR) {
        if (init.size() != 2) throw InvalidArgument("compute_features: DiscreteSIR needs init (I_0, S_0)");
        start.assign(init.begin(), init.end());
    } else if (!init.empty()) {
        start.assign(init.begin(), init.end());
    } else {
        start.assign(y.begin(), y.begin() + model.order_p());
    }
    const int lags = std::min<int>(options.acf_lags, static_cast<int>(n) - 1);
    const auto acf_y = sample_acf(data, static_cast<std::size_t>(lags));

    const auto orbit = skeleton_attractor(model, start, options.burn_in, n + static_cast<std::size_t>(options.shift_max));
    const bool bounded = orbit.size() == n + static_cast<std::size_t>(options.shift_max);

    std::vector<double> model_gamma;
    bool have_model_acf = false;
    if (model.family() == ModelFamily::LinearAR && stability_check(model)) {
        // Theoretical ACV with the innovation variance matched to the data's lag-0 value.
        auto g = ar_autocovariance(model.theta(), 1.0, static_cast<std::size_t>(lags));
        const double scale = acf_y.gamma[0] / g[0];
        for (double& v : g) v *= scale;
        model_gamma = std::move(g);
        have_model_acf = true;
    } else if (bounded) {
        model_gamma = sample_acf(std::span<const double>(orbit).first(n), static_cast<std::size_t>(lags)).gamma;
        have_model_acf = true;
    }
    if (have_model_acf) {
        std::vector<double> r(model_gamma.size(), 0.0);
        r[0] = 1.0;
        if (model_gamma[0] > 0.0)
            for (std::size_t k = 1; k < r.size(); ++k) r[k] = model_gamma[k] / model_gamma[0];
        rep.acf_error = lags >= 1 ? acf_match_error(acf_y.r, r, lags) : 0.0;
        rep.d_c = d_c_sup(acf_y.gamma, model_gamma);
    }
    if (bounded) {
        const auto pm = path_match_error(y, orbit, options.shift_max);
        rep.path_match_error = pm.error;
        rep.best_shift = pm.shift;
    } else {
        rep.path_match_error = std::numeric_limits<double>::infinity();
    }
    if (n >= 8) rep.cycle_period_data = cycle_period(data);
    rep.cycle_period_model = cycle_period(model, start, options.cycle);
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    rep.stable = stability_check(model, *lo, *hi);
    if (model.family() == ModelFamily::LinearAR && rep.stable && n >= 2) {
        const auto per = periodogram(data);
        double s = 0.0;
        for (std::size_t j = 0; j < per.freqs.size(); ++j) {
            std::complex<double> a(1.0, 0.0);
            for (std::size_t l = 1; l <= model.theta().size(); ++l) {
                a -= model.theta()[l - 1] * std::polar(1.0, -per.freqs[j] * static_cast<double>(l));
            }
            s += per.power[j] * std::norm(a);
        }
        const double sigma2 = 2.0 * std::numbers::pi * s / static_cast<double>(per.freqs.size());
        const auto fx = ar_spectral_density(model.theta(), sigma2, per.freqs);
        const auto fy = n >= 6 ? smoothed_sdf(per, 3) : per;
        bool positive = true;
        for (double v : fy.power) positive = positive && v > 0.0;
        if (positive && sigma2 > 0.0) rep.d_f = d_f_itakura_saito(fy, fx);
    }
    return rep;
}

}  // namespace featmatch
