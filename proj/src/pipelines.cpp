#include "featmatch/data_io.hpp"
#include "featmatch/errors.hpp"
#include "featmatch/experiments.hpp"
#include "featmatch/features.hpp"
#include "featmatch/rng.hpp"

#include "config_detail.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace featmatch {

using nlohmann::json;
using detail::get_or;

namespace {

DatasetDescriptor descriptor_from_json(const json& j, const std::string& fallback_name) {
    if (!j.is_object() || !j.contains("path")) throw InvalidArgument("config: data.path is required");
    DatasetDescriptor d;
    d.name = j.value("name", fallback_name);
    d.path = j.at("path").get<std::string>();
    if (j.contains("value_column")) {
        const auto& v = j.at("value_column");
        d.value_column = v.is_number() ? std::to_string(v.get<int>()) : v.get<std::string>();
    }
    const auto delim = j.value("delimiter", std::string());
    if (delim.size() > 1) throw InvalidArgument("config: delimiter must be a single character");
    if (!delim.empty()) d.delimiter = delim[0];
    d.min_length = j.value("min_length", std::size_t{1});
    return d;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Record make_record(const std::string& cell, const FitResult& fit) {
    Record r;
    r.cell = cell;
    r.theta_hat = fit.theta_hat;
    r.metrics["objective"] = fit.objective_value;
    r.metrics["converged"] = fit.converged ? 1.0 : 0.0;
    return r;
}

Cell make_cell(int T, const std::string& setting, const std::string& estimator, int m) {
    Cell c;
    c.T = T;
    c.setting = setting;
    c.estimator = estimator;
    c.m = m;
    return c;
}

// Periodogram of the skeleton attractor and its dominant period.
json orbit_spectrum(const ModelSpec& model, std::span<const double> init, int burn_in, std::size_t length,
                    const LimitCycleOptions& lc) {
    json out;
    const auto orbit = skeleton_attractor(model, init, burn_in, length);
    const auto period = cycle_period(model, init, lc);
    out["period"] = nullable(period);
    if (orbit.size() < length) {
        out["power"] = json::array();
        out["peak_period"] = nullptr;
        return out;
    }
    const auto spec = periodogram(orbit);
    std::vector<double> power(spec.power.begin() + 1, spec.power.end());
    out["power"] = power;
    const auto peak = std::max_element(power.begin(), power.end());
    if (peak == power.end() || *peak <= 0.0) {
        out["peak_period"] = nullptr;
    } else {
        out["peak_period"] = 2.0 * M_PI / spec.freqs[static_cast<std::size_t>(peak - power.begin()) + 1];
    }
    return out;
}

std::vector<double> kstep_mse(const ModelSpec& model, std::span<const double> y, int max_k) {
    const int p = model.order_p();
    const int n = static_cast<int>(y.size());
    std::vector<double> sum(static_cast<std::size_t>(max_k), 0.0);
    std::vector<int> count(static_cast<std::size_t>(max_k), 0);
    for (int o = p - 1; o + 1 < n; ++o) {
        const int h = std::min(max_k, n - 1 - o);
        const auto hist = y.subspan(static_cast<std::size_t>(o + 1 - p), static_cast<std::size_t>(p));
        const auto path = skeleton_path(model, hist, h, 0);
        for (int k = 1; k <= h; ++k) {
            const double e = y[static_cast<std::size_t>(o + k)] - path.value[static_cast<std::size_t>(k - 1)];
            sum[static_cast<std::size_t>(k - 1)] += e * e;
            ++count[static_cast<std::size_t>(k - 1)];
        }
    }
    for (std::size_t k = 0; k < sum.size(); ++k) {
        sum[k] = count[k] > 0 ? sum[k] / count[k] : std::numeric_limits<double>::quiet_NaN();
    }
    return sum;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t T, std::size_t stride) {
    std::vector<std::size_t> out;
    if (T > n) return out;
    for (std::size_t s = 0; s + T <= n; s += stride) out.push_back(s);
    return out;
}

ExperimentResult sea_level(const ExperimentConfig& config, int jobs) {
    const json& raw = config.raw;
    const TimeSeries data = load_series(descriptor_from_json(raw.at("data"), "sea-level"));
    const FitOptions fo = detail::fit_options_from_json(raw.value("fit_options", json::object()));
    const int p_max = raw.value("p_max", 10);
    const int ape_m = raw.value("ape_m", 20);
    const int max_k = raw.value("horizons", 30);
    const auto window = std::min<std::size_t>(raw.value("window", std::size_t{100}), data.size());
    const auto stride = raw.value("stride", std::size_t{1});
    if (stride < 1) throw InvalidArgument("config: stride must be >= 1");

    const int p = select_order_aic(data, p_max);
    const auto starts = window_starts(data.size(), window, stride);
    const std::vector<std::string> names{"lse", "whittle", "ape"};

    ExperimentResult result;
    result.name = config.name;
    result.seed = config.seed;
    result.replications = static_cast<int>(starts.size());
    result.config = raw;
    for (const auto& n : names) {
        result.cells.push_back(make_cell(static_cast<int>(window), "sea-level", n, n == "ape" ? ape_m : 1));
    }

    std::vector<std::vector<Record>> slots(starts.size());
    detail::parallel_for(starts.size(), jobs, [&](std::size_t w) {
        const TimeSeries win = data.slice(starts[w], window);
        std::vector<Record> recs;
        for (std::size_t e = 0; e < names.size(); ++e) {
            Record rec;
            try {
                FitOptions opt = fo;
                opt.seed = derive_seed(config.seed, w, e);
                const ModelSpec tmpl = ModelSpec::linear_ar(std::vector<double>(static_cast<std::size_t>(p), 0.0));
                FitResult fit;
                if (names[e] == "lse") {
                    fit = fit_lse(tmpl, win, opt);
                } else if (names[e] == "whittle") {
                    fit = fit_whittle(win, p, opt);
                } else {
                    fit = fit_ape(tmpl, win, ape_m, uniform_weights(ape_m), opt);
                }
                rec = make_record(result.cells[e].id(), fit);
                const auto mse = kstep_mse(tmpl.with_theta(fit.theta_hat), win.values(), max_k);
                for (int k = 1; k <= max_k; ++k) {
                    if (std::isfinite(mse[static_cast<std::size_t>(k - 1)])) {
                        rec.metrics["mse_" + std::to_string(k)] = mse[static_cast<std::size_t>(k - 1)];
                    }
                }
            } catch (const Error& err) {
                rec = Record{};
                rec.cell = result.cells[e].id();
                rec.failed = true;
                rec.error = err.what();
            }
            rec.replication = static_cast<int>(w);
            recs.push_back(rec);
        }
        slots[w] = std::move(recs);
    });
    for (std::size_t e = 0; e < names.size(); ++e) {
        for (const auto& s : slots) result.records.push_back(s[e]);
    }
    result.extras["order"] = p;
    result.extras["window_starts"] = starts;
    summarize(result);
    return result;
}

ExperimentResult sunspots(const ExperimentConfig& config, int jobs) {
    const json& raw = config.raw;
    const TimeSeries counts = load_series(descriptor_from_json(raw.at("data"), "sunspots"));
    std::vector<double> x(counts.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (counts[i] < 0.0) throw DataError("sunspots: negative count at row " + std::to_string(i + 1));
        x[i] = std::log(counts[i] + 1.0);
    }
    const TimeSeries series(x);
    const FitOptions fo = detail::fit_options_from_json(raw.value("fit_options", json::object()));
    const int k = raw.value("regime_order", 3);
    const int d = raw.value("delay", 2);
    const auto sizes = raw.value("window_lengths", std::vector<int>{20, 35, 50, 100});
    const auto ms = raw.value("m", std::vector<int>{1, 10, 20, 30, 50});
    const auto stride = raw.value("stride", 10);
    if (stride < 1) throw InvalidArgument("config: stride must be >= 1");

    CycleOptions co;
    const auto data_period = cycle_period(series, co);
    if (!data_period) throw DataError("sunspots: no dominant cycle in the data");
    LimitCycleOptions lc;
    lc.max_iter = raw.value("cycle_max_iter", lc.max_iter);

    std::vector<double> tmpl_theta(static_cast<std::size_t>(2 * k + 4), 0.0);
    tmpl_theta.back() = d;
    const ModelSpec tmpl = ModelSpec::setar(tmpl_theta, k);

    struct Task {
        int T;
        int m;
        std::size_t start;
        std::size_t cell;
        int rep;
    };
    ExperimentResult result;
    result.name = config.name;
    result.seed = config.seed;
    result.config = raw;
    std::vector<Task> tasks;
    for (int T : sizes) {
        const auto starts = window_starts(series.size(), static_cast<std::size_t>(T), static_cast<std::size_t>(stride));
        for (int m : ms) {
            if (m > T) continue;
            result.cells.push_back(make_cell(T, "sunspots", "ape", m));
            for (std::size_t w = 0; w < starts.size(); ++w) {
                tasks.push_back({T, m, starts[w], result.cells.size() - 1, static_cast<int>(w)});
            }
            result.replications = std::max(result.replications, static_cast<int>(starts.size()));
        }
    }
    std::vector<Record> records(tasks.size());
    detail::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
        const Task& t = tasks[i];
        Record rec;
        rec.replication = t.rep;
        rec.cell = result.cells[t.cell].id();
        try {
            const TimeSeries win = series.slice(t.start, static_cast<std::size_t>(t.T));
            FitOptions opt = fo;
            opt.seed = derive_seed(config.seed, static_cast<std::uint64_t>(t.rep), 1000000 + t.cell);
            const auto fit = fit_ape(tmpl, win, t.m, uniform_weights(t.m), opt);
            const ModelSpec fitted = tmpl.with_theta(fit.theta_hat);
            const std::vector<double> init(win.values().begin(), win.values().begin() + fitted.order_p());
            const auto [lo, hi] = std::minmax_element(win.values().begin(), win.values().end());
            rec.theta_hat = fit.theta_hat;
            const bool stable = stability_check(fitted, *lo, *hi, opt.seed);
            rec.metrics["unstable"] = stable ? 0.0 : 100.0;
            if (const auto period = cycle_period(fitted, init, lc)) {
                rec.metrics["cycle_period"] = *period;
                rec.metrics["period_difference"] = std::abs(*period - *data_period);
            }
        } catch (const Error& err) {
            rec.failed = true;
            rec.error = err.what();
        }
        records[i] = std::move(rec);
    });
    result.records = std::move(records);
    result.extras["data_period"] = *data_period;
    summarize(result);
    return result;
}

ExperimentResult blowflies(const ExperimentConfig& config, int jobs) {
    const json& raw = config.raw;
    TimeSeries data = load_series(descriptor_from_json(raw.at("data"), "blowflies"));
    const auto length = raw.value("length", std::size_t{200});
    if (data.size() < length) throw DataError("blowflies: series shorter than the requested length");
    data = data.slice(0, length);
    const int tau = raw.value("tau", 8);
    const FitOptions fo = detail::fit_options_from_json(raw.value("fit_options", json::object()));
    const auto start = raw.value("start", std::vector<double>{});
    const ModelSpec tmpl = ModelSpec::blowfly(start.empty() ? std::vector<double>{1.0, 1.0, 0.5, 1.0} : start, tau);
    const int T = static_cast<int>(length);
    LimitCycleOptions lc;
    lc.max_iter = raw.value("cycle_max_iter", 4000);
    lc.max_period = raw.value("max_period", 400);

    ExperimentResult result;
    result.name = config.name;
    result.seed = config.seed;
    result.replications = 1;
    result.config = raw;
    result.cells.push_back(make_cell(T, "blowflies", "lse", 1));
    result.cells.push_back(make_cell(T, "blowflies", "ape", T));

    FitOptions opt = fo;
    opt.seed = derive_seed(config.seed, 0, 0);
    const FitResult lse = fit_lse(tmpl, data, opt);
    opt.seed = derive_seed(config.seed, 0, 1);
    const FitResult ape = fit_ape(tmpl, data, T, uniform_weights(T), opt);
    const std::vector<double> init(data.values().begin(), data.values().begin() + tmpl.order_p());

    const FitResult* fits[] = {&lse, &ape};
    for (std::size_t e = 0; e < 2; ++e) {
        Record rec = make_record(result.cells[e].id(), *fits[e]);
        const auto period = cycle_period(tmpl.with_theta(fits[e]->theta_hat), init, lc);
        if (period) rec.metrics["cycle_period"] = *period;
        result.records.push_back(rec);
        result.extras["fits"][result.cells[e].estimator] = to_json(*fits[e]);
    }

    const auto sweep = raw.value("tau_sweep", std::vector<int>{4, 100});
    if (sweep.size() != 2 || sweep[0] < 1 || sweep[1] < sweep[0]) {
        throw InvalidArgument("config: tau_sweep must be [first, last]");
    }
    const int burn = raw.value("sweep_burn_in", 2000);
    const auto orbit_len = raw.value("sweep_length", std::size_t{512});
    const double level = data.mean();
    std::vector<int> taus;
    for (int t = sweep[0]; t <= sweep[1]; ++t) taus.push_back(t);
    for (std::size_t e = 0; e < 2; ++e) {
        std::vector<json> cols(taus.size());
        detail::parallel_for(taus.size(), jobs, [&](std::size_t i) {
            const ModelSpec m = ModelSpec::blowfly(fits[e]->theta_hat, taus[i]);
            std::vector<double> hist(static_cast<std::size_t>(m.order_p()), level);
            const std::size_t n = std::min(hist.size(), data.size());
            std::copy(data.values().begin(), data.values().begin() + static_cast<std::ptrdiff_t>(n), hist.begin());
            cols[i] = orbit_spectrum(m, hist, burn, orbit_len, lc);
        });
        json periods = json::array();
        json power = json::array();
        for (auto& c : cols) {
            periods.push_back(c["period"]);
            power.push_back(c["power"]);
        }
        result.extras["tau_sweep"][result.cells[e].estimator] = {{"period", periods}, {"power", power}};
    }
    result.extras["tau_sweep"]["tau"] = taus;
    summarize(result);
    return result;
}

ExperimentResult measles(const ExperimentConfig& config, int jobs) {
    const json& raw = config.raw;
    const json& dj = raw.at("data");
    if (!dj.contains("path")) throw InvalidArgument("config: data.path is required");
    const Table table = load_table(dj.at("path").get<std::string>());
    const TimeSeries infections(table.column(dj.value("infections", std::string("infections"))));
    TimeSeries births(table.column(dj.value("births", std::string("births"))));
    if (dj.contains("vaccination_rate")) {
        births = adjust_births(births, TimeSeries(table.column(dj.at("vaccination_rate").get<std::string>())));
    }
    const int S = raw.value("season_length", 26);
    const FitOptions fo = detail::fit_options_from_json(raw.value("fit_options", json::object()));
    const int T = static_cast<int>(infections.size());
    const auto ms = raw.value("m", std::vector<json>{json(1), json("T")});

    SirStructure sir;
    sir.births.assign(births.values().begin(), births.values().end());
    sir.season_length = S;
    const ModelSpec full_tmpl = ModelSpec::discrete_sir(std::vector<double>(static_cast<std::size_t>(S + 1), 0.0), sir);

    ExperimentResult result;
    result.name = config.name;
    result.seed = config.seed;
    result.replications = 1;
    result.config = raw;

    FitOptions opt = fo;
    opt.seed = derive_seed(config.seed, 0, 0);
    const FitResult full = fit_ape(full_tmpl, infections, 1, uniform_weights(1), opt);
    result.cells.push_back(make_cell(T, "full", "ape", 1));
    result.records.push_back(make_record(result.cells.back().id(), full));
    result.extras["fits"]["full-ape-1"] = to_json(full);

    SirStructure reduced = sir;
    reduced.base_betas = full_tmpl.with_theta(full.theta_hat).sir_betas();
    const ModelSpec red_tmpl = ModelSpec::discrete_sir({1.0, full.theta_hat.back()}, reduced);
    json beta_table = json::object();
    beta_table["full-ape-1"] = reduced.base_betas;
    std::vector<ModelSpec> fitted_models{full_tmpl.with_theta(full.theta_hat)};
    std::vector<std::string> labels{"full-ape-1"};
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const int m = ms[i].is_string() ? T : ms[i].get<int>();
        if (m < 1 || m > T) throw InvalidArgument("config: measles m out of range");
        opt.seed = derive_seed(config.seed, 0, 1 + i);
        opt.start = red_tmpl.theta();
        const FitResult fit = fit_ape(red_tmpl, infections, m, uniform_weights(m), opt);
        const std::string label = "reduced-ape-" + (ms[i].is_string() ? std::string("T") : std::to_string(m));
        result.cells.push_back(make_cell(T, "reduced", "ape", m));
        result.records.push_back(make_record(result.cells.back().id(), fit));
        result.extras["fits"][label] = to_json(fit);
        const ModelSpec fitted = red_tmpl.with_theta(fit.theta_hat);
        beta_table[label] = fitted.sir_betas();
        fitted_models.push_back(fitted);
        labels.push_back(label);
    }
    for (std::size_t i = 0; i < result.records.size(); ++i) {
        result.records[i].metrics["S0"] = result.records[i].theta_hat.back();
    }
    result.extras["beta_table"] = beta_table;

    const auto grid = raw.value("birth_grid", std::vector<double>{1000.0, 8000.0, 250.0});
    if (grid.size() != 3 || !(grid[2] > 0.0) || grid[1] < grid[0]) {
        throw InvalidArgument("config: birth_grid must be [first, last, step]");
    }
    std::vector<double> levels;
    for (double b = grid[0]; b <= grid[1] + 1e-9 * grid[2]; b += grid[2]) levels.push_back(b);
    const int burn = raw.value("sweep_burn_in", 26 * 100);
    const auto orbit_len = raw.value("sweep_length", std::size_t{26 * 40});
    LimitCycleOptions lc;
    lc.max_iter = raw.value("cycle_max_iter", 26 * 200);
    lc.max_period = raw.value("max_period", 26 * 10);
    const ModelSpec& sweep_base = fitted_models.back();
    std::vector<json> cols(levels.size());
    detail::parallel_for(levels.size(), jobs, [&](std::size_t i) {
        SirStructure s = sweep_base.sir();
        s.births = {levels[i]};
        const ModelSpec m = ModelSpec::discrete_sir(sweep_base.theta(), s);
        const std::vector<double> init{infections[0], sweep_base.theta().back()};
        try {
            cols[i] = orbit_spectrum(m, init, burn, orbit_len, lc);
        } catch (const Error&) {
            cols[i] = {{"period", nullptr}, {"power", json::array()}, {"peak_period", nullptr}};
        }
    });
    json periods = json::array();
    json power = json::array();
    for (auto& c : cols) {
        periods.push_back(c["period"]);
        power.push_back(c["power"]);
    }
    result.extras["birth_sweep"] = {{"model", labels.back()}, {"births", levels}, {"period", periods}, {"power", power}};
    summarize(result);
    return result;
}

}  // namespace

ExperimentResult run_real_data(const ExperimentConfig& config, int jobs) {
    if (!config.pipeline) throw InvalidArgument("run_real_data: config has no pipeline");
    try {
        const auto& name = *config.pipeline;
        if (name == "sea-level") return sea_level(config, jobs);
        if (name == "sunspots") return sunspots(config, jobs);
        if (name == "blowflies") return blowflies(config, jobs);
        if (name == "measles") return measles(config, jobs);
        throw InvalidArgument("unknown pipeline '" + name + "'");
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config schema: ") + e.what());
    }
}

}  // namespace featmatch
