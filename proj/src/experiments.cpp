#include "featmatch/experiments.hpp"

#include "config_detail.hpp"

#include "featmatch/data_io.hpp"
#include "featmatch/errors.hpp"
#include "featmatch/features.hpp"
#include "featmatch/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

namespace featmatch {

using nlohmann::json;

std::string Cell::id() const {
    return "T=" + std::to_string(T) + "|" + setting + "|" + estimator + "|m=" + std::to_string(m);
}

namespace {

using detail::get_or;
using detail::fit_options_from_json;
using detail::parallel_for;

NoiseSpec noise_from_json(const json& j, NoiseSpec base = {}) {
    if (!j.is_object()) return base;
    base.innovation_sd = get_or(j, "innovation_sd", base.innovation_sd);
    base.measurement_sd = get_or(j, "measurement_sd", base.measurement_sd);
    if (j.contains("innovation_truncation")) {
        if (j.at("innovation_truncation").is_null()) {
            base.innovation_truncation.reset();
        } else {
            base.innovation_truncation = j.at("innovation_truncation").get<double>();
        }
    }
    if (j.contains("observation_law")) {
        const auto law = j.at("observation_law").get<std::string>();
        if (law == "gaussian") {
            base.observation_law = ObservationLaw::Gaussian;
        } else if (law == "poisson" || law == "poisson-mean-state") {
            base.observation_law = ObservationLaw::PoissonMeanState;
        } else {
            throw InvalidArgument("unknown observation_law '" + law + "'");
        }
    }
    base.validate();
    return base;
}

struct EstimatorSpec {
    std::string name;
    int m = 1;
    bool m_is_T = false;
    int ell = 1;
    WeightRequest weights;
};

struct Setting {
    std::string label;
    json overrides;
};

struct Study {
    json generator;
    json fitted;
    std::vector<EstimatorSpec> estimators;
    std::vector<Setting> settings;
    std::vector<std::string> metrics;
    json metric_options;
    FitOptions fit_options;
};

WeightRequest weights_from_json(const json& j) {
    WeightRequest w;
    if (!j.is_object()) return w;
    w.kind = parse_weight_kind(get_or<std::string>(j, "kind", "uniform"));
    w.one_hot_index = get_or(j, "index", 1);
    w.n_periods = get_or(j, "n_periods", 1);
    return w;
}

Study parse_study(const json& raw) {
    Study s;
    s.generator = raw.at("generator");
    s.fitted = raw.value("fitted", json::object());
    for (const auto& e : raw.at("estimators")) {
        const auto name = e.at("name").get<std::string>();
        static const std::vector<std::string> known{"lse", "ape", "ayw", "yule-walker", "walker", "whittle"};
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw InvalidArgument("unknown estimator '" + name + "'");
        }
        const auto weights = weights_from_json(e.value("weights", json::object()));
        if (name == "ape" || name == "ayw") {
            const auto& ms = e.at("m");
            for (const auto& mv : ms) {
                EstimatorSpec spec;
                spec.name = name;
                spec.weights = weights;
                if (mv.is_string()) {
                    if (mv.get<std::string>() != "T") throw InvalidArgument("m must be an integer or \"T\"");
                    spec.m_is_T = true;
                } else {
                    spec.m = mv.get<int>();
                    if (spec.m < 1) throw InvalidArgument("m must be >= 1");
                }
                s.estimators.push_back(spec);
            }
        } else if (name == "walker") {
            for (int ell : e.value("ell", std::vector<int>{1})) {
                EstimatorSpec spec;
                spec.name = name;
                spec.ell = ell;
                spec.m = ell;
                s.estimators.push_back(spec);
            }
        } else {
            EstimatorSpec spec;
            spec.name = name;
            spec.m = name == "lse" ? 1 : 0;
            s.estimators.push_back(spec);
        }
    }
    if (s.estimators.empty()) throw InvalidArgument("config: no estimators");
    if (raw.contains("settings")) {
        for (const auto& st : raw.at("settings")) s.settings.push_back({st.at("label").get<std::string>(), st});
    }
    if (s.settings.empty()) s.settings.push_back({"base", json::object()});
    s.metrics = raw.value("metrics", std::vector<std::string>{"theta_error", "acf_error"});
    s.metric_options = raw.value("metric_options", json::object());
    s.fit_options = fit_options_from_json(raw.value("fit_options", json::object()));
    return s;
}

bool is_fractional(const json& gen) { return gen.value("family", std::string()) == "fractional-noise"; }

// Uniform draw from the AR(p) stationarity region by rejection from its bounding box
// |theta_i| <= C(p, i).
std::vector<double> sample_stationary_ar(int p, Rng& rng) {
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        std::vector<double> th(static_cast<std::size_t>(p));
        double binom = 1.0;
        for (int i = 1; i <= p; ++i) {
            binom = binom * (p - i + 1) / i;
            th[static_cast<std::size_t>(i - 1)] = rng.uniform(-binom, binom);
        }
        if (stability_check(ModelSpec::linear_ar(th))) return th;
    }
    throw InvalidArgument("stationary sampler: no draw accepted");
}

struct Generated {
    std::vector<double> y;
    std::vector<double> states;
    std::optional<ModelSpec> model;  // the generating model when parametric
    std::optional<double> d;         // fractional differencing parameter
};

Generated generate(const json& gen_base, const Setting& setting, int T, std::uint64_t seed) {
    json gen = gen_base;
    for (const auto& [k, v] : setting.overrides.items()) {
        if (k == "label") continue;
        if (k == "noise" && gen.contains("noise")) {
            for (const auto& [nk, nv] : v.items()) gen["noise"][nk] = nv;
        } else {
            gen[k] = v;
        }
    }
    Generated out;
    if (is_fractional(gen)) {
        const double d = gen.at("d").get<double>();
        const auto fi = fractional_noise(d, static_cast<std::size_t>(T), seed);
        out.y.assign(fi.values().begin(), fi.values().end());
        out.states = out.y;
        out.d = d;
        return out;
    }
    Rng rng(splitmix64(seed ^ 0xA5A5A5A5ULL));
    ModelSpec model = model_from_json(gen);
    if (gen.value("theta_sampler", std::string()) == "stationary-uniform") {
        model = model.with_theta(sample_stationary_ar(static_cast<int>(model.num_params()), rng));
    }
    if (gen.contains("sn")) {
        const double sn = gen.at("sn").get<double>();
        if (model.family() != ModelFamily::LinearAR || !(sn >= 0.0 && sn < 1.0)) {
            throw InvalidArgument("sn requires a LinearAR generator and 0 <= sn < 1");
        }
        NoiseSpec nz = model.noise();
        const double s0 = nz.innovation_sd;
        const double varx = ar_autocovariance(model.theta(), s0 * s0, 0)[0];
        nz.measurement_sd = std::sqrt(sn * varx / (1.0 - sn));
        model = model.with_noise(nz);
    }
    std::vector<double> init;
    if (gen.contains("init")) {
        init = gen.at("init").get<std::vector<double>>();
    } else {
        init.assign(model.family() == ModelFamily::DiscreteSIR ? 2 : static_cast<std::size_t>(model.order_p()), 0.0);
    }
    SimulateOptions so;
    so.burn_in = gen.value("burn_in", 500);
    const auto path = simulate_path(model, static_cast<std::size_t>(T), seed, init, so);
    out.y = path.observations;
    out.states = path.states;
    out.model = model;
    return out;
}

ModelSpec fitted_template(const json& fitted, int p) {
    const auto family = parse_family(fitted.value("family", std::string("ar")));
    if (family == ModelFamily::LinearAR) return ModelSpec::linear_ar(std::vector<double>(static_cast<std::size_t>(p), 0.0));
    return model_from_json(fitted);
}

std::vector<double> reference_acf(const Generated& g, std::span<const double> y, int lags) {
    if (g.d) return fi_autocorrelation(*g.d, static_cast<std::size_t>(lags));
    if (g.model && g.model->family() == ModelFamily::LinearAR && stability_check(*g.model)) {
        const double s0 = g.model->noise().innovation_sd;
        const double s1 = g.model->noise().measurement_sd;
        if (s0 > 0.0) {
            auto gm = ar_autocovariance(g.model->theta(), s0 * s0, static_cast<std::size_t>(lags));
            const double g0 = gm[0] + s1 * s1;
            std::vector<double> r(gm.size());
            r[0] = 1.0;
            for (std::size_t k = 1; k < r.size(); ++k) r[k] = gm[k] / g0;
            return r;
        }
    }
    return sample_acf(y, static_cast<std::size_t>(lags)).r;
}

std::optional<std::vector<double>> model_acf(const ModelSpec& fitted, const Generated& g, int T, int lags,
                                             std::uint64_t seed) {
    if (fitted.family() == ModelFamily::LinearAR) {
        if (!stability_check(fitted)) return std::nullopt;
        auto gm = ar_autocovariance(fitted.theta(), 1.0, static_cast<std::size_t>(lags));
        std::vector<double> r(gm.size());
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = gm[k] / gm[0];
        return r;
    }
    NoiseSpec nz;
    if (g.model) nz.innovation_sd = g.model->noise().innovation_sd;
    if (g.model) nz.innovation_truncation = g.model->noise().innovation_truncation;
    const ModelSpec sim = fitted.with_noise(nz);
    const std::size_t len = std::max<std::size_t>(static_cast<std::size_t>(T), 2000);
    // Start from the data: zero is a fixed point of some skeletons and unstable for others.
    const std::vector<double> init(g.y.begin(), g.y.begin() + fitted.order_p());
    try {
        const auto path = simulate_path(sim, len, seed, init);
        if (static_cast<std::size_t>(lags) >= path.states.size()) return std::nullopt;
        return sample_acf(path.states, static_cast<std::size_t>(lags)).r;
    } catch (const Error&) {
        return std::nullopt;
    }
}

bool wants(const Study& s, const std::string& metric) {
    return std::find(s.metrics.begin(), s.metrics.end(), metric) != s.metrics.end();
}

Record fit_and_measure(const Study& study, const EstimatorSpec& est, const Generated& g, int T, int rep,
                       const std::string& cell_id, std::uint64_t fit_seed, std::uint64_t sim_seed) {
    Record rec;
    rec.replication = rep;
    rec.cell = cell_id;
    try {
        const TimeSeries data(g.y);
        const auto policy = study.fitted.value("order", json::object());
        int p = policy.value("p", 1);
        if (policy.value("policy", std::string("fixed")) == "aic") {
            p = select_order_aic(data, policy.value("p_max", 10));
            rec.metrics["order"] = p;
        }
        const ModelSpec tmpl = fitted_template(study.fitted, p);
        FitOptions fo = study.fit_options;
        fo.seed = fit_seed;
        const int m = est.m_is_T ? T : est.m;
        FitResult fit;
        if (est.name == "lse") {
            fit = fit_lse(tmpl, data, fo);
        } else if (est.name == "ape") {
            fit = fit_ape(tmpl, data, m, make_weights(est.weights, data, m), fo);
        } else if (est.name == "ayw") {
            fit = fit_ayw(data, p, m);
        } else if (est.name == "yule-walker") {
            fit = fit_yule_walker(data, p);
        } else if (est.name == "walker") {
            fit = fit_walker(data, p, est.ell);
        } else {
            fit = fit_whittle(data, p, fo);
        }
        rec.theta_hat = fit.theta_hat;
        const ModelSpec fitted = tmpl.with_theta(fit.theta_hat);
        const auto& mo = study.metric_options;
        const int lags = std::min(mo.value("acf_lags", 50), T - 1);
        const int shift_max = mo.value("shift_max", 50);
        const int burn = mo.value("burn_in", 1000);

        if (wants(study, "converged")) rec.metrics["converged"] = fit.converged ? 1.0 : 0.0;
        if (wants(study, "objective")) rec.metrics["objective"] = fit.objective_value;
        if (wants(study, "theta")) {
            for (std::size_t i = 0; i < fit.theta_hat.size(); ++i) {
                rec.metrics["theta_" + std::to_string(i + 1)] = fit.theta_hat[i];
            }
        }
        if (wants(study, "theta_error") && g.model && g.model->family() == fitted.family() &&
            g.model->num_params() == fitted.num_params()) {
            double s = 0.0;
            const auto mask = fitted.smooth_mask();
            int cnt = 0;
            for (std::size_t i = 0; i < fit.theta_hat.size(); ++i) {
                if (!mask[i]) continue;
                const double d = fit.theta_hat[i] - g.model->theta()[i];
                s += d * d;
                ++cnt;
            }
            rec.metrics["theta_error"] = std::sqrt(s / std::max(cnt, 1));
        }
        if (wants(study, "acf_error") && lags >= 1) {
            const auto ry = reference_acf(g, g.y, lags);
            if (const auto rx = model_acf(fitted, g, T, lags, sim_seed)) {
                rec.metrics["acf_error"] = acf_match_error(ry, *rx, lags);
            }
        }
        const bool want_path = wants(study, "matching_error") || wants(study, "matching_error_states");
        const bool want_period = wants(study, "cycle_period") || wants(study, "correct_period") ||
                                 wants(study, "period_difference");
        if (want_path || want_period) {
            const std::vector<double> init(g.y.begin(), g.y.begin() + fitted.order_p());
            if (want_path) {
                const auto orbit =
                    skeleton_attractor(fitted, init, burn, static_cast<std::size_t>(T + shift_max));
                if (orbit.size() == static_cast<std::size_t>(T + shift_max)) {
                    if (wants(study, "matching_error")) {
                        rec.metrics["matching_error"] = path_match_error(g.y, orbit, shift_max).error;
                    }
                    if (wants(study, "matching_error_states")) {
                        rec.metrics["matching_error_states"] = path_match_error(g.states, orbit, shift_max).error;
                    }
                }
            }
            if (want_period) {
                LimitCycleOptions lc;
                lc.max_iter = mo.value("cycle_max_iter", lc.max_iter);
                lc.tol = mo.value("cycle_tol", lc.tol);
                const auto period = cycle_period(fitted, init, lc);
                if (period && wants(study, "cycle_period")) rec.metrics["cycle_period"] = *period;
                if (wants(study, "correct_period") && mo.contains("correct_period")) {
                    const double target = mo.at("correct_period").get<double>();
                    rec.metrics["correct_period"] = period && *period == target ? 100.0 : 0.0;
                }
                if (wants(study, "period_difference")) {
                    std::optional<double> ref;
                    if (mo.contains("reference_period")) {
                        ref = mo.at("reference_period").get<double>();
                    } else if (T >= 8) {
                        ref = cycle_period(data);
                    }
                    if (ref && period) rec.metrics["period_difference"] = std::abs(*period - *ref);
                }
            }
        }
        if (wants(study, "unstable")) {
            const auto [lo, hi] = std::minmax_element(g.y.begin(), g.y.end());
            rec.metrics["unstable"] = stability_check(fitted, *lo, *hi) ? 0.0 : 100.0;
        }
    } catch (const Error& e) {
        rec.failed = true;
        rec.error = e.what();
        rec.metrics.clear();
        rec.theta_hat.clear();
    }
    return rec;
}

}  // namespace

namespace detail {

FitOptions fit_options_from_json(const json& j) {
    FitOptions o;
    if (!j.is_object()) return o;
    o.restarts = get_or(j, "restarts", o.restarts);
    o.restart_rel_sd = get_or(j, "restart_rel_sd", o.restart_rel_sd);
    o.newton.max_iter = get_or(j, "max_iter", o.newton.max_iter);
    o.newton.grad_tol = get_or(j, "grad_tol", o.newton.grad_tol);
    o.threshold_trim = get_or(j, "threshold_trim", o.threshold_trim);
    o.threshold_starts = get_or(j, "threshold_starts", o.threshold_starts);
    o.refine_threshold = get_or(j, "refine_threshold", o.refine_threshold);
    return o;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

ModelSpec model_from_json(const json& j) {
    try {
        const auto family = parse_family(j.at("family").get<std::string>());
        const auto theta = j.value("theta", std::vector<double>{});
        const NoiseSpec noise = noise_from_json(j.value("noise", json::object()));
        switch (family) {
            case ModelFamily::LinearAR: return ModelSpec::linear_ar(theta, noise);
            case ModelFamily::SETAR: return ModelSpec::setar(theta, j.value("regime_order", 1), noise);
            case ModelFamily::QuadMap:
                if (theta.size() != 2) throw InvalidArgument("QuadMap: theta must be (b1, b2)");
                return ModelSpec::quad_map(theta[0], theta[1], noise);
            case ModelFamily::Blowfly: return ModelSpec::blowfly(theta, j.value("tau", 8), noise);
            case ModelFamily::DiscreteSIR: {
                SirStructure sir;
                const auto sj = j.value("sir", json::object());
                sir.births = sj.value("births", std::vector<double>{});
                sir.season_length = sj.value("season_length", 26);
                sir.base_betas = sj.value("base_betas", std::vector<double>{});
                return ModelSpec::discrete_sir(theta, sir, noise);
            }
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("model description: ") + e.what());
    }
    throw InvalidArgument("model description: unknown family");
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    try {
        ExperimentConfig c;
        c.raw = j;
        c.name = j.value("name", std::string("experiment"));
        c.seed = j.value("seed", std::uint64_t{1});
        c.replications = j.value("replications", 200);
        c.keep_records = j.value("keep_records", true);
        if (c.replications < 1) throw InvalidArgument("config: replications must be >= 1");
        if (j.contains("pipeline")) {
            c.pipeline = j.at("pipeline").get<std::string>();
        } else {
            c.sample_sizes = j.at("sample_sizes").get<std::vector<int>>();
            if (c.sample_sizes.empty()) throw InvalidArgument("config: sample_sizes is empty");
            for (int t : c.sample_sizes)
                if (t < 2) throw InvalidArgument("config: every sample size must be >= 2");
            parse_study(j);  // validate early
        }
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config schema: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    const auto text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
    return from_json(j);
}

MetricSummary summarize_values(const std::vector<double>& v) {
    if (v.empty()) throw InvalidArgument("summarize: empty result");
    MetricSummary s;
    s.n = static_cast<int>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

void summarize(ExperimentResult& result) {
    if (result.cells.empty()) throw InvalidArgument("summarize: empty result");
    for (auto& cell : result.cells) {
        const auto id = cell.id();
        cell.count = 0;
        cell.failures = 0;
        cell.metrics.clear();
        std::map<std::string, std::vector<double>> values;
        for (const auto& rec : result.records) {
            if (rec.cell != id) continue;
            if (rec.failed) {
                ++cell.failures;
                continue;
            }
            ++cell.count;
            for (const auto& [k, v] : rec.metrics) values[k].push_back(v);
        }
        const int total = cell.count + cell.failures;
        cell.aborted = total > 0 && 2 * cell.failures > total;
        if (cell.aborted) continue;
        for (const auto& [k, v] : values) cell.metrics[k] = summarize_values(v);
    }
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
    if (config.pipeline) throw InvalidArgument("run_experiment: config describes a real-data pipeline");
    const Study study = parse_study(config.raw);
    const int R = config.replications;
    const auto& sizes = config.sample_sizes;
    const std::size_t ns = study.settings.size();
    const std::size_t nt = sizes.size();
    const std::size_t ne = study.estimators.size();

    for (const auto& e : study.estimators) {
        for (int T : sizes) {
            if (!e.m_is_T && e.m > T) {
                throw InvalidArgument("config: estimator " + e.name + " with m=" + std::to_string(e.m) +
                                      " exceeds sample size " + std::to_string(T));
            }
        }
    }

    ExperimentResult result;
    result.name = config.name;
    result.seed = config.seed;
    result.replications = R;
    result.config = config.raw;
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t t = 0; t < nt; ++t) {
            for (const auto& e : study.estimators) {
                Cell c;
                c.T = sizes[t];
                c.setting = study.settings[s].label;
                c.estimator = e.name;
                c.m = e.m_is_T ? sizes[t] : e.m;
                result.cells.push_back(c);
            }
        }
    }

    const std::size_t ntasks = ns * nt * static_cast<std::size_t>(R);
    std::vector<std::vector<Record>> slots(ntasks);
    parallel_for(ntasks, jobs, [&](std::size_t task) {
        const std::size_t rep = task % static_cast<std::size_t>(R);
        const std::size_t data_cell = task / static_cast<std::size_t>(R);
        const std::size_t s = data_cell / nt;
        const std::size_t t = data_cell % nt;
        const int T = sizes[t];
        const auto seed = derive_seed(config.seed, rep, data_cell);
        std::vector<Record> out;
        out.reserve(ne);
        Generated g;
        try {
            g = generate(study.generator, study.settings[s], T, seed);
        } catch (const Error& err) {
            for (std::size_t e = 0; e < ne; ++e) {
                Record rec;
                rec.replication = static_cast<int>(rep);
                rec.cell = result.cells[data_cell * ne + e].id();
                rec.failed = true;
                rec.error = std::string("simulation: ") + err.what();
                out.push_back(rec);
            }
            slots[task] = std::move(out);
            return;
        }
        for (std::size_t e = 0; e < ne; ++e) {
            const std::size_t cell_index = data_cell * ne + e;
            out.push_back(fit_and_measure(study, study.estimators[e], g, T, static_cast<int>(rep),
                                          result.cells[cell_index].id(),
                                          derive_seed(config.seed, rep, 1000000 + cell_index),
                                          derive_seed(config.seed, rep, 2000000 + cell_index)));
        }
        slots[task] = std::move(out);
    });

    for (std::size_t dc = 0; dc < ns * nt; ++dc) {
        for (std::size_t e = 0; e < ne; ++e) {
            for (int r = 0; r < R; ++r) {
                result.records.push_back(slots[dc * static_cast<std::size_t>(R) + static_cast<std::size_t>(r)][e]);
            }
        }
    }
    summarize(result);
    if (!config.keep_records) result.records.clear();
    return result;
}

ExperimentResult run(const ExperimentConfig& config, int jobs) {
    return config.pipeline ? run_real_data(config, jobs) : run_experiment(config, jobs);
}

}  // namespace featmatch
