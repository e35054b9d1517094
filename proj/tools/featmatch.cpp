// featmatch command-line tool: simulate, fit, features, experiment, report.

#include "featmatch/data_io.hpp"
#include "featmatch/errors.hpp"
#include "featmatch/estimators.hpp"
#include "featmatch/experiments.hpp"
#include "featmatch/features.hpp"
#include "featmatch/models.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace featmatch;
using nlohmann::json;

namespace {

constexpr int kIoError = 1;
constexpr int kUsage = 2;

struct ModelFlags {
    std::string family;
    std::vector<double> theta;
    int tau = 8;
    int regime_order = 1;
    int season_length = 26;
    std::string births_path;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool theta_required) {
    static const std::set<std::string> families{"ar", "linear-ar", "setar", "quad", "quad-map",
                                                "blowfly", "sir", "discrete-sir"};
    cmd->add_option("--family", f.family, "Model family")->required()->check(CLI::IsMember(families));
    auto* th = cmd->add_option("--theta", f.theta, "Parameter vector, comma separated")->delimiter(',');
    if (theta_required) th->required();
    cmd->add_option("--tau", f.tau, "Blowfly delay");
    cmd->add_option("--regime-order", f.regime_order, "SETAR per-regime AR order");
    cmd->add_option("--season-length", f.season_length, "SIR season length");
    cmd->add_option("--births", f.births_path, "SIR births series file");
}

ModelSpec build_model(const ModelFlags& f, NoiseSpec noise = {}) {
    switch (parse_family(f.family)) {
        case ModelFamily::LinearAR: return ModelSpec::linear_ar(f.theta, noise);
        case ModelFamily::SETAR: return ModelSpec::setar(f.theta, f.regime_order, noise);
        case ModelFamily::QuadMap:
            if (f.theta.size() != 2) throw InvalidArgument("quad map: --theta must be b1,b2");
            return ModelSpec::quad_map(f.theta[0], f.theta[1], noise);
        case ModelFamily::Blowfly: return ModelSpec::blowfly(f.theta, f.tau, noise);
        case ModelFamily::DiscreteSIR: {
            if (f.births_path.empty()) throw InvalidArgument("sir: --births is required");
            SirStructure sir;
            const auto b = load_series(f.births_path);
            sir.births.assign(b.values().begin(), b.values().end());
            sir.season_length = f.season_length;
            return ModelSpec::discrete_sir(f.theta, sir, noise);
        }
    }
    throw InvalidArgument("unknown family");
}

// Zero-parameter template with the structure implied by the flags.
ModelSpec fit_template(const ModelFlags& f, int p) {
    if (!f.theta.empty()) return build_model(f);
    ModelFlags g = f;
    switch (parse_family(f.family)) {
        case ModelFamily::LinearAR: g.theta.assign(static_cast<std::size_t>(p), 0.0); break;
        case ModelFamily::SETAR:
            g.theta.assign(static_cast<std::size_t>(2 * f.regime_order + 4), 0.0);
            g.theta.back() = 1.0;
            break;
        case ModelFamily::QuadMap: g.theta = {0.0, 0.0}; break;
        case ModelFamily::Blowfly: g.theta = {1.0, 1.0, 0.5, 1.0}; break;
        case ModelFamily::DiscreteSIR: g.theta.assign(static_cast<std::size_t>(f.season_length + 1), 0.0); break;
    }
    return build_model(g);
}

std::string fmt(double v, int prec = 4) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string mean_sd(const MetricSummary& s, int prec = 4) {
    std::string out = fmt(s.mean, prec);
    out += " (" + (s.sd ? fmt(*s.sd, prec) : std::string("NA")) + ")";
    return out;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::ostringstream os;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        for (std::size_t i = 0; i < r.size(); ++i) {
            os << r[i] << std::string(width[i] - r[i].size(), ' ');
            if (i + 1 < r.size()) os << "  ";
        }
        os << '\n';
        if (k == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            os << std::string(total - 2, '-') << '\n';
        }
    }
    return os.str();
}

std::string method_label(const Cell& c) {
    if (c.estimator == "ape" || c.estimator == "ayw") {
        std::string up = c.estimator == "ape" ? "APE" : "AYW";
        return up + "(<=" + std::to_string(c.m) + ")";
    }
    if (c.estimator == "walker") return "Walker(l=" + std::to_string(c.m) + ")";
    return c.estimator;
}

const MetricSummary* metric(const Cell& c, const std::string& key) {
    const auto it = c.metrics.find(key);
    return it == c.metrics.end() ? nullptr : &it->second;
}

std::string report_cycle_table(const ExperimentResult& r) {
    std::vector<std::vector<std::string>> rows{
        {"Model setting", "Method", "Matching error", "Cycle periods", "Frequency of correct periods (%)"}};
    for (const auto& c : r.cells) {
        std::vector<std::string> row{"T=" + std::to_string(c.T) + ", " + c.setting, method_label(c)};
        if (c.aborted) {
            row.insert(row.end(), {"aborted", "aborted", "aborted"});
        } else {
            // Noise-free states when recorded, the observations otherwise.
            const auto* me = metric(c, "matching_error_states");
            if (me == nullptr) me = metric(c, "matching_error");
            const auto* cp = metric(c, "cycle_period");
            const auto* fr = metric(c, "correct_period");
            row.push_back(me ? mean_sd(*me) : "NA");
            row.push_back(cp ? mean_sd(*cp) : "NA");
            row.push_back(fr ? fmt(fr->mean, 0) : "NA");
        }
        rows.push_back(row);
    }
    return render_table(rows);
}

std::string report_sunspots(const ExperimentResult& r) {
    std::set<int> sizes;
    std::set<int> ms;
    for (const auto& c : r.cells) {
        sizes.insert(c.T);
        ms.insert(c.m);
    }
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"m in APE(<=m)"};
    for (int T : sizes) head.push_back(std::to_string(T));
    rows.push_back(head);
    for (int m : ms) {
        std::vector<std::string> row{std::to_string(m)};
        for (int T : sizes) {
            std::string cell;
            for (const auto& c : r.cells) {
                if (c.T != T || c.m != m) continue;
                if (c.aborted) {
                    cell = "aborted";
                    break;
                }
                const auto* pd = metric(c, "period_difference");
                const auto* un = metric(c, "unstable");
                const int unstable = un ? static_cast<int>(std::lround(un->mean * un->n / 100.0)) : 0;
                cell = (pd ? mean_sd(*pd) : std::string("NA")) + " [" + std::to_string(unstable) + "]";
            }
            row.push_back(cell);
        }
        rows.push_back(row);
    }
    return render_table(rows);
}

std::string report_measles(const ExperimentResult& r) {
    std::ostringstream os;
    const auto& table = r.extras.at("beta_table");
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"Method"};
    std::size_t seasons = 0;
    for (const auto& [label, betas] : table.items()) seasons = std::max(seasons, betas.size());
    for (std::size_t k = 1; k <= seasons; ++k) head.push_back("beta_" + std::to_string(k));
    head.push_back("S_0");
    rows.push_back(head);
    for (const auto& [label, betas] : table.items()) {
        std::vector<std::string> row{label};
        for (const auto& b : betas) row.push_back(fmt(b.get<double>(), 2));
        const auto& fit = r.extras.at("fits").at(label);
        row.push_back(fmt(fit.at("theta_hat").back().get<double>(), 0));
        rows.push_back(row);
    }
    os << render_table(rows);
    return os.str();
}

std::string report_generic(const ExperimentResult& r) {
    std::set<std::string> keys;
    for (const auto& c : r.cells)
        for (const auto& [k, v] : c.metrics) keys.insert(k);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"T", "Setting", "Method", "n", "failures"};
    head.insert(head.end(), keys.begin(), keys.end());
    rows.push_back(head);
    for (const auto& c : r.cells) {
        std::vector<std::string> row{std::to_string(c.T), c.setting, method_label(c), std::to_string(c.count),
                                     std::to_string(c.failures)};
        for (const auto& k : keys) {
            const auto* s = metric(c, k);
            row.push_back(c.aborted ? "aborted" : s ? mean_sd(*s) : "NA");
        }
        rows.push_back(row);
    }
    return render_table(rows);
}

std::string report(const ExperimentResult& r, const std::string& layout) {
    std::string chosen = layout;
    if (chosen == "auto") {
        const std::string pipeline = r.config.value("pipeline", std::string());
        bool cyc = false;
        for (const auto& c : r.cells) cyc = cyc || metric(c, "correct_period") != nullptr;
        chosen = pipeline == "sunspots" ? "sunspots" : pipeline == "measles" ? "measles" : cyc ? "cycles" : "generic";
    }
    std::string out = r.name + " (seed " + std::to_string(r.seed) + ")\n";
    if (chosen == "cycles") return out + report_cycle_table(r);
    if (chosen == "sunspots") return out + report_sunspots(r);
    if (chosen == "measles") return out + report_measles(r);
    if (chosen == "generic") return out + report_generic(r);
    throw InvalidArgument("unknown layout '" + layout + "'");
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_text(path, text);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-matching estimation for parametric time-series models"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate a series from a model");
    ModelFlags sim_model;
    add_model_flags(sim, sim_model, true);
    std::size_t sim_T = 100;
    std::uint64_t sim_seed = 1;
    double sigma0 = 1.0;
    double sigma1 = 0.0;
    std::vector<double> sim_init;
    int sim_burn = 500;
    std::string sim_out;
    std::string sim_law = "gaussian";
    sim->add_option("--T", sim_T, "Series length")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--sigma0", sigma0, "Dynamic noise sd")->check(CLI::NonNegativeNumber);
    sim->add_option("--sigma1", sigma1, "Measurement noise sd")->check(CLI::NonNegativeNumber);
    sim->add_option("--observation", sim_law, "gaussian or poisson")->check(CLI::IsMember({"gaussian", "poisson"}));
    sim->add_option("--init", sim_init, "Initial states, comma separated (default zeros)")->delimiter(',');
    sim->add_option("--burn-in", sim_burn, "Discarded leading iterations")->check(CLI::NonNegativeNumber);
    sim->add_option("--out", sim_out, "Output file (default stdout)");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a model to a series");
    ModelFlags fit_model;
    add_model_flags(fit, fit_model, false);
    std::string fit_input;
    std::string fit_column;
    std::string estimator = "lse";
    int fit_m = 1;
    std::string weight_kind = "uniform";
    int weight_index = 1;
    int n_periods = 1;
    int fit_p = 1;
    int fit_ell = 1;
    std::uint64_t fit_seed = FitOptions{}.seed;
    int restarts = FitOptions{}.restarts;
    std::string fit_out;
    fit->add_option("--input", fit_input, "Series file")->required();
    fit->add_option("--column", fit_column, "Value column (name or 1-based index)");
    fit->add_option("--estimator", estimator, "Estimator")
        ->check(CLI::IsMember({"lse", "ape", "ayw", "yule-walker", "walker", "whittle"}));
    fit->add_option("--m", fit_m, "Horizon / lag count")->check(CLI::PositiveNumber);
    fit->add_option("--weights", weight_kind, "Weight scheme")
        ->check(CLI::IsMember({"uniform", "one-hot", "abs-acf", "constant-periods"}));
    fit->add_option("--weight-index", weight_index, "One-hot horizon")->check(CLI::PositiveNumber);
    fit->add_option("--periods", n_periods, "Number of cycle periods for constant-periods")->check(CLI::PositiveNumber);
    fit->add_option("--p", fit_p, "AR order for linear estimators")->check(CLI::PositiveNumber);
    fit->add_option("--ell", fit_ell, "Walker lag offset")->check(CLI::PositiveNumber);
    fit->add_option("--seed", fit_seed, "Restart seed");
    fit->add_option("--restarts", restarts, "Random restarts")->check(CLI::NonNegativeNumber);
    fit->add_option("--out", fit_out, "Output JSON (default stdout)");

    // features
    auto* feat = app.add_subcommand("features", "Compare data features with a model skeleton");
    ModelFlags feat_model;
    add_model_flags(feat, feat_model, true);
    std::string feat_input;
    std::string feat_column;
    FeatureOptions fopts;
    std::string feat_out;
    feat->add_option("--input", feat_input, "Series file")->required();
    feat->add_option("--column", feat_column, "Value column");
    feat->add_option("--lags", fopts.acf_lags, "ACF lags")->check(CLI::PositiveNumber);
    feat->add_option("--shift-max", fopts.shift_max, "Largest phase shift")->check(CLI::NonNegativeNumber);
    feat->add_option("--burn-in", fopts.burn_in, "Skeleton burn-in")->check(CLI::NonNegativeNumber);
    feat->add_option("--out", feat_out, "Output JSON (default stdout)");

    // experiment
    auto* exp = app.add_subcommand("experiment", "Run an experiment configuration");
    std::string config_path;
    int jobs = 1;
    std::string exp_out;
    std::string format = "json";
    exp->add_option("--config", config_path, "Experiment JSON")->required();
    exp->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    exp->add_option("--out", exp_out, "Output path")->required();
    exp->add_option("--format", format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));

    // report
    auto* rep = app.add_subcommand("report", "Render a saved result as text tables");
    std::string rep_input;
    std::string layout = "auto";
    std::string rep_out;
    rep->add_option("--input", rep_input, "Result JSON")->required();
    rep->add_option("--layout", layout, "auto, cycles, sunspots, measles or generic")
        ->check(CLI::IsMember({"auto", "cycles", "sunspots", "measles", "generic"}));
    rep->add_option("--out", rep_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (*sim) {
            NoiseSpec noise;
            noise.innovation_sd = sigma0;
            noise.measurement_sd = sigma1;
            if (sim_law == "poisson") noise.observation_law = ObservationLaw::PoissonMeanState;
            ModelSpec model = [&] {
                try {
                    return build_model(sim_model, noise);
                } catch (const InvalidArgument& e) {
                    std::cerr << "error: " << e.what() << '\n' << sim->help();
                    throw;
                }
            }();
            std::vector<double> init = sim_init;
            if (init.empty()) init.assign(static_cast<std::size_t>(model.state_dim() == 2 ? 2 : model.order_p()), 0.0);
            SimulateOptions so;
            so.burn_in = sim_burn;
            const TimeSeries y = simulate(model, sim_T, sim_seed, init, so);
            if (sim_out.empty()) {
                for (std::size_t t = 0; t < y.size(); ++t) std::printf("%zu %.17g\n", t, y[t]);
            } else {
                write_series(sim_out, y);
                const auto acf = sample_acf(y, 0);
                std::printf("length=%zu mean=%.6g gamma0=%.6g seed=%llu\n", y.size(), y.mean(), acf.gamma[0],
                            static_cast<unsigned long long>(sim_seed));
            }
            return 0;
        }
        if (*fit) {
            DatasetDescriptor d;
            d.path = fit_input;
            d.value_column = fit_column;
            const TimeSeries data = load_series(d);
            FitOptions fo;
            fo.seed = fit_seed;
            fo.restarts = restarts;
            FitResult res;
            ModelSpec tmpl = fit_template(fit_model, fit_p);
            if (estimator == "lse") {
                res = fit_lse(tmpl, data, fo);
            } else if (estimator == "ape") {
                WeightRequest wr;
                wr.kind = parse_weight_kind(weight_kind);
                wr.one_hot_index = weight_index;
                wr.n_periods = n_periods;
                res = fit_ape(tmpl, data, fit_m, make_weights(wr, data, fit_m), fo);
            } else {
                if (tmpl.family() != ModelFamily::LinearAR) throw InvalidArgument(estimator + " requires --family ar");
                const int p = fit_model.theta.empty() ? fit_p : static_cast<int>(fit_model.theta.size());
                if (estimator == "ayw") res = fit_ayw(data, p, fit_m);
                else if (estimator == "yule-walker") res = fit_yule_walker(data, p);
                else if (estimator == "walker") res = fit_walker(data, p, fit_ell);
                else res = fit_whittle(data, p, fo);
            }
            json j = to_json(res);
            j["seed"] = fit_seed;
            j["family"] = std::string(to_string(tmpl.family()));
            emit(j.dump(2) + "\n", fit_out);
            return 0;
        }
        if (*feat) {
            DatasetDescriptor d;
            d.path = feat_input;
            d.value_column = feat_column;
            const TimeSeries data = load_series(d);
            const ModelSpec model = build_model(feat_model);
            std::vector<double> init;
            if (model.family() == ModelFamily::DiscreteSIR) init = {data[0], model.theta().back()};
            const auto rep_f = compute_features(data, model, fopts, init);
            auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
            json j{{"acf_error", rep_f.acf_error},
                   {"path_match_error", rep_f.path_match_error},
                   {"best_shift", rep_f.best_shift},
                   {"cycle_period_data", opt(rep_f.cycle_period_data)},
                   {"cycle_period_model", opt(rep_f.cycle_period_model)},
                   {"stable", rep_f.stable},
                   {"d_c", opt(rep_f.d_c)},
                   {"d_f", opt(rep_f.d_f)}};
            emit(j.dump(2) + "\n", feat_out);
            return 0;
        }
        if (*exp) {
            const auto config = ExperimentConfig::load(config_path);
            const auto result = run(config, jobs);
            if (format == "json" || format == "both") {
                std::string path = exp_out;
                if (format == "both" && path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
                    path = path.substr(0, path.size() - 4) + ".json";
                }
                save_results(result, path, ResultFormat::Json);
            }
            if (format == "csv" || format == "both") {
                std::string path = exp_out;
                if (format == "both") {
                    const auto dot = path.rfind('.');
                    path = (dot == std::string::npos ? path : path.substr(0, dot)) + ".csv";
                }
                save_results(result, path, ResultFormat::Csv);
            }
            std::cout << report(result, "auto");
            return 0;
        }
        if (*rep) {
            const auto result = load_results(rep_input);
            emit(report(result, layout), rep_out);
            return 0;
        }
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        // Configuration and result files with a bad schema are input errors; bad flags are usage errors.
        return (*exp || *rep) ? kIoError : kUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    }
    return 0;
}
