#include "featmatch/models.hpp"

#include "featmatch/errors.hpp"
#include "featmatch/rng.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

namespace featmatch {

namespace {

// Local derivatives of the scalar skeleton map with respect to the chronological
// lag window w_0 = x_{t-p}, ..., w_{p-1} = x_{t-1} and the parameters.
struct LocalJet {
    double value = 0.0;
    Eigen::VectorXd dw;   // p
    Eigen::VectorXd dth;  // q
    Eigen::MatrixXd ww;   // p x p
    Eigen::MatrixXd thw;  // q x p
    Eigen::MatrixXd thth; // q x q

    void reset(int p, int q, int order) {
        value = 0.0;
        if (order >= 1) {
            dw.setZero(p);
            dth.setZero(q);
        }
        if (order >= 2) {
            ww.setZero(p, p);
            thw.setZero(q, p);
            thth.setZero(q, q);
        }
    }
};

void setar_layout_check(const std::vector<double>& theta, int k) {
    if (theta.size() != static_cast<std::size_t>(2 * k + 4)) {
        throw InvalidArgument("SETAR: theta must hold 2*(regime_order+1) coefficients plus threshold and delay");
    }
}

int setar_delay_from(double raw) {
    const double r = std::round(raw);
    if (std::abs(raw - r) > 1e-9 || r < 1.0) throw InvalidArgument("SETAR: delay must be a positive integer");
    return static_cast<int>(r);
}

void scalar_jet(const ModelSpec& model, const double* w, int order, TiePolicy ties, LocalJet& jet) {
    const auto& th = model.theta();
    const int p = model.order_p();
    const int q = static_cast<int>(th.size());
    jet.reset(p, q, order);

    switch (model.family()) {
        case ModelFamily::LinearAR: {
            double v = 0.0;
            for (int i = 1; i <= p; ++i) {
                const int r = p - i;
                v += th[static_cast<std::size_t>(i - 1)] * w[r];
                if (order >= 1) {
                    jet.dw[r] = th[static_cast<std::size_t>(i - 1)];
                    jet.dth[i - 1] = w[r];
                }
                if (order >= 2) jet.thw(i - 1, r) = 1.0;
            }
            jet.value = v;
            return;
        }
        case ModelFamily::QuadMap: {
            const double b1 = th[0];
            const double b2 = th[1];
            const double x = w[p - 1];
            jet.value = b1 * x + b2 * x * x;
            if (order >= 1) {
                jet.dw[p - 1] = b1 + 2.0 * b2 * x;
                jet.dth[0] = x;
                jet.dth[1] = x * x;
            }
            if (order >= 2) {
                jet.ww(p - 1, p - 1) = 2.0 * b2;
                jet.thw(0, p - 1) = 1.0;
                jet.thw(1, p - 1) = 2.0 * x;
            }
            return;
        }
        case ModelFamily::SETAR: {
            const int k = model.regime_order();
            const int d = model.delay();
            const double c = th[static_cast<std::size_t>(2 * k + 2)];
            const double trigger = w[p - d];
            if (order >= 1 && ties == TiePolicy::Throw && trigger == c) {
                throw NonDifferentiablePoint("SETAR: delay state lies exactly on the threshold");
            }
            const int off = trigger <= c ? 0 : k + 1;
            double v = th[static_cast<std::size_t>(off)];
            if (order >= 1) jet.dth[off] = 1.0;
            for (int i = 1; i <= k; ++i) {
                const int r = p - i;
                const double b = th[static_cast<std::size_t>(off + i)];
                v += b * w[r];
                if (order >= 1) {
                    jet.dw[r] = b;
                    jet.dth[off + i] = w[r];
                }
                if (order >= 2) jet.thw(off + i, r) = 1.0;
            }
            jet.value = v;
            return;
        }
        case ModelFamily::Blowfly: {
            const double c = th[0];
            const double n0 = th[1];
            const double nu = th[2];
            const double alpha = th[3];
            const int tau = model.delay();
            const int ru = p - tau;
            const int r1 = p - 1;
            const double u = w[ru];
            const double x1 = w[r1];
            double h = 0.0;
            if (u > 0.0) h = c * std::pow(u, alpha) * std::exp(-u / n0);
            jet.value = h + nu * x1;
            if (order >= 1) {
                jet.dw[r1] += nu;
                jet.dth[2] = x1;
            }
            if (order >= 2) jet.thw(2, r1) = 1.0;
            if (u > 0.0 && order >= 1) {
                const double e = std::pow(u, alpha) * std::exp(-u / n0);
                const double lu = std::log(u);
                const double a = alpha / u - 1.0 / n0;
                const double b = u / (n0 * n0);
                jet.dw[ru] += h * a;
                jet.dth[0] += e;
                jet.dth[1] += h * b;
                jet.dth[3] += h * lu;
                if (order >= 2) {
                    jet.ww(ru, ru) += h * (a * a - alpha / (u * u));
                    jet.thw(0, ru) += e * a;
                    jet.thw(1, ru) += h * (a * b + 1.0 / (n0 * n0));
                    jet.thw(3, ru) += h * (a * lu + 1.0 / u);
                    jet.thth(0, 1) = jet.thth(1, 0) = e * b;
                    jet.thth(0, 3) = jet.thth(3, 0) = e * lu;
                    jet.thth(1, 1) = h * (b * b - 2.0 * u / (n0 * n0 * n0));
                    jet.thth(1, 3) = jet.thth(3, 1) = h * b * lu;
                    jet.thth(3, 3) = h * lu * lu;
                }
            }
            return;
        }
        case ModelFamily::DiscreteSIR:
            break;
    }
    throw InvalidArgument("scalar skeleton requested for a non-scalar family");
}

double scalar_value(const ModelSpec& model, const double* w) {
    LocalJet jet;
    scalar_jet(model, w, 0, TiePolicy::Subgradient, jet);
    return jet.value;
}

SkeletonPath scalar_path(const ModelSpec& model, std::span<const double> history, int steps, int order,
                         TiePolicy ties) {
    const int p = model.order_p();
    const int q = static_cast<int>(model.num_params());
    if (static_cast<int>(history.size()) != p) throw InvalidArgument("skeleton: history length must equal order_p");

    SkeletonPath out;
    out.q = q;
    out.steps = steps;
    const auto total = static_cast<std::size_t>(steps + p);
    std::vector<double> vals(total, 0.0);
    std::copy(history.begin(), history.end(), vals.begin());
    std::vector<double> g;
    std::vector<double> h;
    const auto uq = static_cast<std::size_t>(q);
    if (order >= 1) g.assign(total * uq, 0.0);
    if (order >= 2) h.assign(total * uq * uq, 0.0);

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    LocalJet jet;
    RowMat hj(q, q);
    for (int j = 0; j < steps; ++j) {
        const auto idx = static_cast<std::size_t>(j + p);
        const double* w = vals.data() + j;
        scalar_jet(model, w, order, ties, jet);
        if (!std::isfinite(jet.value)) throw ExplosiveSimulation("skeleton: non-finite intermediate state");
        vals[idx] = jet.value;
        if (order >= 1) {
            // D holds dg/dtheta of the p lag states, chronological rows.
            Eigen::Map<const RowMat> d(g.data() + static_cast<std::size_t>(j) * uq, p, q);
            Eigen::Map<Eigen::VectorXd> gnew(g.data() + idx * uq, q);
            gnew.noalias() = d.transpose() * jet.dw;
            gnew += jet.dth;
            if (order >= 2) {
                hj.noalias() = d.transpose() * jet.ww * d;
                const RowMat cross = jet.thw * d;
                hj += cross;
                hj += cross.transpose();
                hj += jet.thth;
                for (int r = 0; r < p; ++r) {
                    const double gr = jet.dw[r];
                    if (gr == 0.0) continue;
                    Eigen::Map<const RowMat> hr(h.data() + (static_cast<std::size_t>(j + r)) * uq * uq, q, q);
                    hj += gr * hr;
                }
                Eigen::Map<RowMat>(h.data() + idx * uq * uq, q, q) = hj;
            }
        }
    }
    out.value.assign(vals.begin() + p, vals.end());
    if (order >= 1) out.grad.assign(g.begin() + static_cast<std::ptrdiff_t>(p * uq), g.end());
    if (order >= 2) out.hess.assign(h.begin() + static_cast<std::ptrdiff_t>(p * uq * uq), h.end());
    return out;
}

// Derivative of beta_k with respect to theta.
void sir_beta_gradient(const ModelSpec& model, int season, Eigen::VectorXd& db) {
    const auto& sir = model.sir();
    const int q = static_cast<int>(model.num_params());
    db.setZero(q);
    if (sir.base_betas.empty()) {
        db[season] = 1.0;
    } else {
        const double mean = std::accumulate(sir.base_betas.begin(), sir.base_betas.end(), 0.0) /
                            static_cast<double>(sir.base_betas.size());
        db[0] = sir.base_betas[static_cast<std::size_t>(season)] - mean;
    }
}

SkeletonPath sir_path(const ModelSpec& model, std::span<const double> history, int steps, int order,
                      std::int64_t start_time) {
    if (history.size() != 2) throw InvalidArgument("DiscreteSIR: history must be (I_t, S_t)");
    const int q = static_cast<int>(model.num_params());
    const auto uq = static_cast<std::size_t>(q);
    const auto betas = model.sir_betas();
    const int seasons = model.sir().season_length;

    SkeletonPath out;
    out.q = q;
    out.steps = steps;
    out.value.resize(static_cast<std::size_t>(steps));
    if (order >= 1) out.grad.resize(static_cast<std::size_t>(steps) * uq);
    if (order >= 2) out.hess.resize(static_cast<std::size_t>(steps) * uq * uq);

    double inf = history[0];
    double sus = history[1];
    Eigen::VectorXd di = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(q);
    ds[q - 1] = 1.0;  // S_t = S0 + known offset
    Eigen::MatrixXd hi = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd db(q);
    Eigen::VectorXd u(q);
    Eigen::VectorXd df(q);
    Eigen::MatrixXd hf(q, q);

    for (int j = 0; j < steps; ++j) {
        const std::int64_t t = start_time + j;
        const int season = static_cast<int>(((t % seasons) + seasons) % seasons);
        const double e = std::exp(betas[static_cast<std::size_t>(season)]);
        const double f = e * sus * inf;
        const double birth = model.sir().birth(t);
        if (!std::isfinite(f)) throw ExplosiveSimulation("DiscreteSIR: non-finite intermediate state");
        if (order >= 1) {
            sir_beta_gradient(model, season, db);
            u = sus * di + inf * ds;
            df = f * db + e * u;
            if (order >= 2) {
                hf = f * db * db.transpose();
                hf.noalias() += e * (db * u.transpose() + u * db.transpose());
                hf.noalias() += e * (sus * hi + inf * hs + ds * di.transpose() + di * ds.transpose());
                hs -= hf;
                hi = hf;
            }
            ds -= df;
            di = df;
        }
        sus = sus + birth - f;
        inf = f;
        out.value[static_cast<std::size_t>(j)] = inf;
        if (order >= 1) {
            std::copy(di.data(), di.data() + q, out.grad.begin() + static_cast<std::ptrdiff_t>(j * q));
        }
        if (order >= 2) {
            for (int k = 0; k < q; ++k)
                for (int l = 0; l < q; ++l)
                    out.hess[(static_cast<std::size_t>(j) * uq + static_cast<std::size_t>(k)) * uq +
                             static_cast<std::size_t>(l)] = hi(k, l);
        }
    }
    return out;
}

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

std::string_view to_string(ModelFamily family) noexcept {
    switch (family) {
        case ModelFamily::LinearAR: return "ar";
        case ModelFamily::SETAR: return "setar";
        case ModelFamily::QuadMap: return "quad";
        case ModelFamily::Blowfly: return "blowfly";
        case ModelFamily::DiscreteSIR: return "sir";
    }
    return "unknown";
}

ModelFamily parse_family(std::string_view name) {
    if (name == "ar" || name == "linear-ar" || name == "LinearAR") return ModelFamily::LinearAR;
    if (name == "setar" || name == "SETAR") return ModelFamily::SETAR;
    if (name == "quad" || name == "quad-map" || name == "QuadMap") return ModelFamily::QuadMap;
    if (name == "blowfly" || name == "Blowfly") return ModelFamily::Blowfly;
    if (name == "sir" || name == "discrete-sir" || name == "DiscreteSIR") return ModelFamily::DiscreteSIR;
    throw InvalidArgument("unknown model family '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
    if (!(innovation_sd >= 0.0) || !std::isfinite(innovation_sd)) {
        throw InvalidArgument("NoiseSpec: innovation_sd must be finite and >= 0");
    }
    if (!(measurement_sd >= 0.0) || !std::isfinite(measurement_sd)) {
        throw InvalidArgument("NoiseSpec: measurement_sd must be finite and >= 0");
    }
    if (innovation_truncation && !(*innovation_truncation > 0.0)) {
        throw InvalidArgument("NoiseSpec: truncation bound must be > 0");
    }
}

double SirStructure::birth(std::int64_t t) const noexcept {
    if (births.empty()) return 0.0;
    if (t < 0) return births.front();
    const auto i = static_cast<std::size_t>(t);
    return i < births.size() ? births[i] : births.back();
}

ModelSpec ModelSpec::linear_ar(std::vector<double> theta, NoiseSpec noise) {
    ModelSpec m;
    m.family_ = ModelFamily::LinearAR;
    m.theta_ = std::move(theta);
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

ModelSpec ModelSpec::setar(std::vector<double> theta, int regime_order, NoiseSpec noise) {
    ModelSpec m;
    m.family_ = ModelFamily::SETAR;
    m.theta_ = std::move(theta);
    m.regime_order_ = regime_order;
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

ModelSpec ModelSpec::quad_map(double b1, double b2, NoiseSpec noise) {
    ModelSpec m;
    m.family_ = ModelFamily::QuadMap;
    m.theta_ = {b1, b2};
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

ModelSpec ModelSpec::blowfly(std::vector<double> theta, int tau, NoiseSpec noise) {
    ModelSpec m;
    m.family_ = ModelFamily::Blowfly;
    m.theta_ = std::move(theta);
    m.delay_ = tau;
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

ModelSpec ModelSpec::discrete_sir(std::vector<double> theta, SirStructure sir, NoiseSpec noise) {
    ModelSpec m;
    m.family_ = ModelFamily::DiscreteSIR;
    m.theta_ = std::move(theta);
    m.sir_ = std::move(sir);
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

void ModelSpec::validate_and_derive() {
    noise_.validate();
    for (double v : theta_) {
        if (!std::isfinite(v)) throw InvalidArgument("ModelSpec: non-finite parameter");
    }
    switch (family_) {
        case ModelFamily::LinearAR:
            if (theta_.empty()) throw InvalidArgument("LinearAR: need at least one coefficient");
            order_p_ = static_cast<int>(theta_.size());
            break;
        case ModelFamily::SETAR:
            if (regime_order_ < 1) throw InvalidArgument("SETAR: regime order must be >= 1");
            setar_layout_check(theta_, regime_order_);
            delay_ = setar_delay_from(theta_.back());
            order_p_ = std::max(regime_order_, delay_);
            break;
        case ModelFamily::QuadMap:
            if (theta_.size() != 2) throw InvalidArgument("QuadMap: theta must be (b1, b2)");
            order_p_ = 1;
            break;
        case ModelFamily::Blowfly:
            if (theta_.size() != 4) throw InvalidArgument("Blowfly: theta must be (c, N0, nu, alpha)");
            if (delay_ < 1) throw InvalidArgument("Blowfly: tau must be >= 1");
            if (!(theta_[1] != 0.0)) throw InvalidArgument("Blowfly: N0 must be nonzero");
            order_p_ = std::max(delay_, 1);
            break;
        case ModelFamily::DiscreteSIR: {
            if (sir_.season_length < 1) throw InvalidArgument("DiscreteSIR: season length must be >= 1");
            const auto seasons = static_cast<std::size_t>(sir_.season_length);
            if (sir_.base_betas.empty()) {
                if (theta_.size() != seasons + 1) {
                    throw InvalidArgument("DiscreteSIR: theta must be (beta_1..beta_S, S0)");
                }
            } else {
                if (sir_.base_betas.size() != seasons) {
                    throw InvalidArgument("DiscreteSIR: base_betas must have one entry per season");
                }
                if (theta_.size() != 2) throw InvalidArgument("DiscreteSIR reduced: theta must be (lambda, S0)");
            }
            order_p_ = 1;
            break;
        }
    }
}

std::vector<bool> ModelSpec::smooth_mask() const {
    std::vector<bool> mask(theta_.size(), true);
    if (family_ == ModelFamily::SETAR) {
        mask[mask.size() - 1] = false;
        mask[mask.size() - 2] = false;
    }
    return mask;
}

std::vector<double> ModelSpec::sir_betas() const {
    if (family_ != ModelFamily::DiscreteSIR) throw InvalidArgument("sir_betas: not a DiscreteSIR model");
    const auto seasons = static_cast<std::size_t>(sir_.season_length);
    if (sir_.base_betas.empty()) return {theta_.begin(), theta_.begin() + static_cast<std::ptrdiff_t>(seasons)};
    const double mean =
        std::accumulate(sir_.base_betas.begin(), sir_.base_betas.end(), 0.0) / static_cast<double>(seasons);
    std::vector<double> out(seasons);
    for (std::size_t k = 0; k < seasons; ++k) out[k] = mean + theta_[0] * (sir_.base_betas[k] - mean);
    return out;
}

ModelSpec ModelSpec::with_theta(std::vector<double> theta) const {
    ModelSpec m = *this;
    m.theta_ = std::move(theta);
    m.validate_and_derive();
    return m;
}

ModelSpec ModelSpec::with_noise(NoiseSpec noise) const {
    ModelSpec m = *this;
    m.noise_ = noise;
    m.validate_and_derive();
    return m;
}

SimulatedPath simulate_path(const ModelSpec& model, std::size_t length, std::uint64_t seed,
                            std::span<const double> init, SimulateOptions options) {
    if (options.burn_in < 0) throw InvalidArgument("simulate: burn_in must be >= 0");
    const auto& noise = model.noise();
    Rng rng(seed);
    auto innovation = [&]() {
        if (noise.innovation_sd == 0.0) return 0.0;
        const double z = noise.innovation_truncation ? rng.truncated_normal(*noise.innovation_truncation)
                                                     : rng.normal();
        return noise.innovation_sd * z;
    };
    auto observe = [&](double x) {
        if (noise.observation_law == ObservationLaw::PoissonMeanState) {
            return static_cast<double>(rng.poisson(std::max(x, 0.0)));
        }
        if (noise.measurement_sd == 0.0) return x;
        return x + noise.measurement_sd * rng.normal();
    };
    auto guard = [&](double x) {
        if (!std::isfinite(x) || std::abs(x) > options.overflow_guard) {
            throw ExplosiveSimulation("simulate: trajectory exceeded the overflow guard");
        }
    };

    const auto burn = static_cast<std::size_t>(options.burn_in);
    const std::size_t total = burn + length;
    SimulatedPath out;
    out.states.reserve(length);
    out.observations.reserve(length);

    if (model.family() == ModelFamily::DiscreteSIR) {
        if (init.size() != 2) throw InvalidArgument("simulate: DiscreteSIR init must be (I_0, S_0)");
        if (length < 1) throw InvalidArgument("simulate: length must be >= order_p");
        const auto betas = model.sir_betas();
        const int seasons = model.sir().season_length;
        double inf = init[0];
        double sus = init[1];
        for (std::size_t t = 0; t < total; ++t) {
            if (t >= burn) {
                out.states.push_back(inf);
                out.observations.push_back(observe(inf));
            }
            const auto season = static_cast<std::size_t>(t % static_cast<std::size_t>(seasons));
            double next = std::exp(betas[season]) * sus * inf;
            if (noise.innovation_sd > 0.0) next *= std::exp(innovation());
            sus = sus + model.sir().birth(static_cast<std::int64_t>(t)) - next;
            inf = next;
            guard(inf);
            guard(sus);
        }
        return out;
    }

    const auto p = static_cast<std::size_t>(model.order_p());
    if (init.size() != p) throw InvalidArgument("simulate: init must hold order_p values");
    if (length < p) throw InvalidArgument("simulate: length must be >= order_p");
    std::vector<double> x(std::max(total, p));
    std::copy(init.begin(), init.end(), x.begin());
    for (std::size_t t = p; t < x.size(); ++t) {
        x[t] = scalar_value(model, x.data() + (t - p)) + innovation();
        guard(x[t]);
    }
    for (std::size_t t = burn; t < total; ++t) {
        out.states.push_back(x[t]);
        out.observations.push_back(observe(x[t]));
    }
    return out;
}

TimeSeries simulate(const ModelSpec& model, std::size_t length, std::uint64_t seed, std::span<const double> init,
                    SimulateOptions options) {
    return TimeSeries(simulate_path(model, length, seed, init, options).observations);
}

SkeletonPath skeleton_path(const ModelSpec& model, std::span<const double> history, int steps, int order,
                           TiePolicy ties, std::int64_t start_time) {
    if (steps < 1) throw InvalidArgument("skeleton: m must be >= 1");
    if (order < 0 || order > 2) throw InvalidArgument("skeleton: derivative order must be 0, 1 or 2");
    if (model.family() == ModelFamily::DiscreteSIR) return sir_path(model, history, steps, order, start_time);
    return scalar_path(model, history, steps, order, ties);
}

double skeleton_predict(const ModelSpec& model, std::span<const double> history, int m, std::int64_t start_time) {
    return skeleton_path(model, history, m, 0, TiePolicy::Subgradient, start_time).value.back();
}

Eigen::VectorXd skeleton_gradient(const ModelSpec& model, std::span<const double> history, int m,
                                  std::int64_t start_time) {
    const auto path = skeleton_path(model, history, m, 1, TiePolicy::Throw, start_time);
    Eigen::VectorXd g(path.q);
    for (int k = 0; k < path.q; ++k) g[k] = path.gradient(m, k);
    return g;
}

Eigen::MatrixXd skeleton_hessian(const ModelSpec& model, std::span<const double> history, int m,
                                 std::int64_t start_time) {
    const auto path = skeleton_path(model, history, m, 2, TiePolicy::Throw, start_time);
    Eigen::MatrixXd h(path.q, path.q);
    for (int k = 0; k < path.q; ++k)
        for (int l = 0; l < path.q; ++l) h(k, l) = path.hessian(m, k, l);
    return h;
}

std::vector<double> skeleton_orbit(const ModelSpec& model, std::span<const double> init, std::size_t steps,
                                   double overflow_guard) {
    std::vector<double> out;
    out.reserve(steps + init.size());
    if (model.family() == ModelFamily::DiscreteSIR) {
        if (init.size() != 2) throw InvalidArgument("skeleton_orbit: DiscreteSIR init must be (I_0, S_0)");
        const auto betas = model.sir_betas();
        const auto seasons = static_cast<std::size_t>(model.sir().season_length);
        double inf = init[0];
        double sus = init[1];
        out.push_back(inf);
        for (std::size_t t = 0; t < steps; ++t) {
            const double next = std::exp(betas[t % seasons]) * sus * inf;
            sus = sus + model.sir().birth(static_cast<std::int64_t>(t)) - next;
            inf = next;
            if (!std::isfinite(inf) || !std::isfinite(sus) || std::abs(inf) > overflow_guard ||
                std::abs(sus) > overflow_guard) {
                break;
            }
            out.push_back(inf);
        }
        return out;
    }
    const auto p = static_cast<std::size_t>(model.order_p());
    if (init.size() != p) throw InvalidArgument("skeleton_orbit: init must hold order_p values");
    out.assign(init.begin(), init.end());
    for (std::size_t t = 0; t < steps; ++t) {
        const double v = scalar_value(model, out.data() + (out.size() - p));
        if (!std::isfinite(v) || std::abs(v) > overflow_guard) break;
        out.push_back(v);
    }
    return out;
}

namespace {

// Joint (I, S) trajectory for recurrence checks on the full SIR state.
std::vector<std::array<double, 2>> sir_state_orbit(const ModelSpec& model, std::span<const double> init,
                                                   std::size_t steps, bool& diverged) {
    std::vector<std::array<double, 2>> out;
    out.reserve(steps + 1);
    const auto betas = model.sir_betas();
    const auto seasons = static_cast<std::size_t>(model.sir().season_length);
    double inf = init[0];
    double sus = init[1];
    out.push_back({inf, sus});
    diverged = false;
    for (std::size_t t = 0; t < steps; ++t) {
        const double next = std::exp(betas[t % seasons]) * sus * inf;
        sus = sus + model.sir().birth(static_cast<std::int64_t>(t)) - next;
        inf = next;
        if (!std::isfinite(inf) || !std::isfinite(sus) || std::abs(inf) > 1e12 || std::abs(sus) > 1e12) {
            diverged = true;
            break;
        }
        out.push_back({inf, sus});
    }
    return out;
}

}  // namespace

Orbit limit_cycle(const ModelSpec& model, std::span<const double> init, LimitCycleOptions options) {
    if (options.max_period < 1) throw InvalidArgument("limit_cycle: max_period must be >= 1");
    if (options.max_iter < 2 * options.max_period) {
        throw InvalidArgument("limit_cycle: max_iter must be >= 2 * max_period");
    }
    Orbit orbit;
    const auto steps = static_cast<std::size_t>(options.max_iter);

    // Each entry: state components compared for recurrence.
    std::vector<std::vector<double>> comps;
    std::vector<double> first;
    bool diverged = false;
    if (model.family() == ModelFamily::DiscreteSIR) {
        if (init.size() != 2) throw InvalidArgument("limit_cycle: DiscreteSIR init must be (I_0, S_0)");
        const auto states = sir_state_orbit(model, init, steps, diverged);
        std::vector<double> sus;
        for (const auto& s : states) {
            first.push_back(s[0]);
            sus.push_back(s[1]);
        }
        comps.push_back(first);
        comps.push_back(std::move(sus));
    } else {
        first = skeleton_orbit(model, init, steps);
        diverged = first.size() < steps + init.size();
        comps.push_back(first);
    }
    if (diverged) {
        orbit.converged = false;
        return orbit;
    }
    const std::size_t n = first.size();
    const std::size_t half = n / 2;
    orbit.states.assign(first.begin() + static_cast<std::ptrdiff_t>(half), first.end());
    orbit.converged = true;

    const std::size_t retained = n - half;
    for (int q = 1; q <= options.max_period; ++q) {
        const auto uq = static_cast<std::size_t>(q);
        if (uq >= retained) break;
        const std::size_t window = std::min(retained - uq, std::max<std::size_t>(2 * uq, 100));
        bool ok = true;
        for (const auto& c : comps) {
            for (std::size_t t = n - uq - window; t < n - uq && ok; ++t) {
                const double scale = std::max(1.0, std::abs(c[t]));
                if (std::abs(c[t + uq] - c[t]) > options.tol * scale) ok = false;
            }
            if (!ok) break;
        }
        if (ok) {
            orbit.period = q;
            break;
        }
    }
    return orbit;
}

double lyapunov_exponent(const ModelSpec& model, std::span<const double> init, int n) {
    if (n < 1) throw InvalidArgument("lyapunov_exponent: n must be >= 1");
    const double neg_inf = -std::numeric_limits<double>::infinity();

    if (model.family() == ModelFamily::DiscreteSIR) {
        if (init.size() != 2) throw InvalidArgument("lyapunov_exponent: DiscreteSIR init must be (I_0, S_0)");
        const auto betas = model.sir_betas();
        const auto seasons = static_cast<std::size_t>(model.sir().season_length);
        double inf = init[0];
        double sus = init[1];
        Eigen::Vector2d v(1.0, 1.0);
        v.normalize();
        double acc = 0.0;
        for (int t = 0; t < n; ++t) {
            const double e = std::exp(betas[static_cast<std::size_t>(t) % seasons]);
            // d(I', S')/d(I, S)
            Eigen::Matrix2d jac;
            jac << e * sus, e * inf, -e * sus, 1.0 - e * inf;
            const double next = e * sus * inf;
            sus = sus + model.sir().birth(t) - next;
            inf = next;
            if (!std::isfinite(inf) || !std::isfinite(sus)) throw ExplosiveSimulation("lyapunov_exponent: divergence");
            v = jac * v;
            const double norm = v.norm();
            if (norm == 0.0) return neg_inf;
            acc += std::log(norm);
            v /= norm;
        }
        return acc / n;
    }

    const int p = model.order_p();
    if (static_cast<int>(init.size()) != p) throw InvalidArgument("lyapunov_exponent: init must hold order_p values");
    std::vector<double> window(init.begin(), init.end());
    Eigen::VectorXd tangent = Eigen::VectorXd::Ones(p).normalized();
    LocalJet jet;
    double acc = 0.0;
    for (int t = 0; t < n; ++t) {
        scalar_jet(model, window.data(), 1, TiePolicy::Subgradient, jet);
        if (!std::isfinite(jet.value)) throw ExplosiveSimulation("lyapunov_exponent: divergence");
        const double lead = jet.dw.dot(tangent);
        if (p == 1) {
            if (jet.dw[0] == 0.0) return neg_inf;
            acc += std::log(std::abs(jet.dw[0]));
        } else {
            Eigen::VectorXd next(p);
            next.head(p - 1) = tangent.tail(p - 1);
            next[p - 1] = lead;
            const double norm = next.norm();
            if (norm == 0.0) return neg_inf;
            acc += std::log(norm);
            tangent = next / norm;
        }
        std::rotate(window.begin(), window.begin() + 1, window.end());
        window.back() = jet.value;
    }
    return acc / n;
}

std::vector<double> fi_ar_coefficients(double d, std::size_t count) {
    if (!(d > -0.5 && d < 0.5)) throw InvalidArgument("fractional noise: d must lie in (-0.5, 0.5)");
    std::vector<double> pi(count + 1, 0.0);
    pi[0] = -1.0;  // so that pi_j = -(coefficient of B^j in (1 - B)^d)
    for (std::size_t j = 1; j <= count; ++j) {
        pi[j] = pi[j - 1] * (static_cast<double>(j) - 1.0 - d) / static_cast<double>(j);
    }
    pi[0] = 1.0;
    return pi;
}

std::vector<double> fi_ma_coefficients(double d, std::size_t count) {
    if (!(d > -0.5 && d < 0.5)) throw InvalidArgument("fractional noise: d must lie in (-0.5, 0.5)");
    std::vector<double> psi(count + 1, 0.0);
    psi[0] = 1.0;
    for (std::size_t j = 1; j <= count; ++j) {
        psi[j] = psi[j - 1] * (static_cast<double>(j) - 1.0 + d) / static_cast<double>(j);
    }
    return psi;
}

std::vector<double> fi_autocorrelation(double d, std::size_t max_lag) {
    if (!(d > -0.5 && d < 0.5)) throw InvalidArgument("fractional noise: d must lie in (-0.5, 0.5)");
    std::vector<double> rho(max_lag + 1, 1.0);
    for (std::size_t k = 1; k <= max_lag; ++k) {
        rho[k] = rho[k - 1] * (static_cast<double>(k) - 1.0 + d) / (static_cast<double>(k) - d);
    }
    return rho;
}

TimeSeries fractional_noise(double d, std::size_t length, std::uint64_t seed) {
    if (length == 0) throw InvalidArgument("fractional_noise: length must be >= 1");
    const std::size_t trunc = std::max<std::size_t>(1000, 10 * length);
    const auto psi = fi_ma_coefficients(d, trunc);
    Rng rng(seed);
    // Innovations e_{-trunc}, ..., e_{length-1}.
    const std::size_t ne = trunc + length;
    std::vector<double> e(ne);
    for (double& v : e) v = rng.normal();
    if (d == 0.0) return TimeSeries(std::vector<double>(e.end() - static_cast<std::ptrdiff_t>(length), e.end()));

    // y_t = sum_{j=0}^{trunc} psi_j e_{t-j}: linear convolution by FFT.
    std::size_t nfft = 1;
    while (nfft < psi.size() + ne) nfft <<= 1;
    std::vector<double> a(nfft, 0.0);
    std::vector<double> b(nfft, 0.0);
    std::copy(psi.begin(), psi.end(), a.begin());
    std::copy(e.begin(), e.end(), b.begin());
    const std::size_t nc = nfft / 2 + 1;
    auto* fa = fftw_alloc_complex(nc);
    auto* fb = fftw_alloc_complex(nc);
    fftw_plan pa = nullptr;
    fftw_plan pb = nullptr;
    fftw_plan pi = nullptr;
    {
        std::lock_guard lock(fftw_mutex());
        pa = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), a.data(), fa, FFTW_ESTIMATE);
        pb = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), b.data(), fb, FFTW_ESTIMATE);
        pi = fftw_plan_dft_c2r_1d(static_cast<int>(nfft), fa, a.data(), FFTW_ESTIMATE);
    }
    fftw_execute(pa);
    fftw_execute(pb);
    for (std::size_t i = 0; i < nc; ++i) {
        const double re = fa[i][0] * fb[i][0] - fa[i][1] * fb[i][1];
        const double im = fa[i][0] * fb[i][1] + fa[i][1] * fb[i][0];
        fa[i][0] = re;
        fa[i][1] = im;
    }
    fftw_execute(pi);
    {
        std::lock_guard lock(fftw_mutex());
        fftw_destroy_plan(pa);
        fftw_destroy_plan(pb);
        fftw_destroy_plan(pi);
        fftw_free(fa);
        fftw_free(fb);
    }
    std::vector<double> y(length);
    const double scale = 1.0 / static_cast<double>(nfft);
    for (std::size_t t = 0; t < length; ++t) y[t] = a[trunc + t] * scale;
    return TimeSeries(std::move(y));
}

std::vector<double> ar_autocovariance(std::span<const double> theta, double sigma2, std::size_t max_lag) {
    const auto p = theta.size();
    if (p == 0) throw InvalidArgument("ar_autocovariance: empty coefficient vector");
    // Unknowns gamma(0..p): gamma(k) - sum_i theta_i gamma(|k - i|) = sigma2 [k == 0].
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p + 1), static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
    rhs[0] = sigma2;
    for (std::size_t k = 0; k <= p; ++k) {
        a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += 1.0;
        for (std::size_t i = 1; i <= p; ++i) {
            const auto lag = static_cast<Eigen::Index>(k > i ? k - i : i - k);
            a(static_cast<Eigen::Index>(k), lag) -= theta[i - 1];
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw SingularSystem("ar_autocovariance: non-stationary coefficients");
    const Eigen::VectorXd g = lu.solve(rhs);
    std::vector<double> out(std::max(max_lag + 1, p + 1));
    for (std::size_t k = 0; k <= p; ++k) out[k] = g[static_cast<Eigen::Index>(k)];
    for (std::size_t k = p + 1; k < out.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 1; i <= p; ++i) s += theta[i - 1] * out[k - i];
        out[k] = s;
    }
    out.resize(max_lag + 1);
    return out;
}

Eigen::MatrixXd companion_matrix(std::span<const double> theta) {
    const auto p = static_cast<Eigen::Index>(theta.size());
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) phi(0, i) = theta[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < p; ++i) phi(i, i - 1) = 1.0;
    return phi;
}

}  // namespace featmatch
