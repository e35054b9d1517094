#include "featmatch/data_io.hpp"
#include "featmatch/errors.hpp"
#include "featmatch/experiments.hpp"
#include "featmatch/models.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace featmatch;
using nlohmann::json;

namespace {
ExperimentResult hand_built(const std::vector<double>& values) {
    ExperimentResult r;
    Cell c;
    c.T = 10;
    c.setting = "s";
    c.estimator = "lse";
    c.m = 1;
    r.cells.push_back(c);
    for (std::size_t i = 0; i < values.size(); ++i) {
        Record rec;
        rec.replication = static_cast<int>(i);
        rec.cell = c.id();
        rec.metrics["x"] = values[i];
        r.records.push_back(rec);
    }
    summarize(r);
    return r;
}

json small_config() {
    return json::parse(R"({
        "name": "small", "seed": 5, "replications": 3, "sample_sizes": [60],
        "generator": {"family": "ar", "theta": [0.6], "noise": {"innovation_sd": 1.0, "measurement_sd": 0.5}},
        "fitted": {"family": "ar", "order": {"policy": "fixed", "p": 1}},
        "estimators": [{"name": "lse"}, {"name": "ape", "m": [1, 5]}, {"name": "ayw", "m": [3]},
                       {"name": "yule-walker"}, {"name": "walker", "ell": [1]}, {"name": "whittle"}],
        "metrics": ["theta_error", "acf_error"]
    })");
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("featmatch_unit_" + name)).string();
}

void write_lines(const std::string& path, const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!header.empty()) out << header << '\n';
    out.precision(17);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? " " : "") << r[i];
        out << '\n';
    }
}
}  // namespace

TEST_CASE("summaries") {
    const auto r = hand_built({1, 2, 3});
    const auto& s = r.cells[0].metrics.at("x");
    CHECK(s.mean == doctest::Approx(2.0));
    REQUIRE(s.sd.has_value());
    CHECK(*s.sd == doctest::Approx(1.0));
    CHECK_FALSE(hand_built({4}).cells[0].metrics.at("x").sd.has_value());
    CHECK(*hand_built({2, 2, 2}).cells[0].metrics.at("x").sd == 0.0);
    ExperimentResult empty;
    CHECK_THROWS_AS(summarize(empty), InvalidArgument);
    CHECK_THROWS_AS(summarize_values({}), InvalidArgument);
}

TEST_CASE("cells with a failure majority are aborted") {
    auto r = hand_built({1, 2, 3});
    r.records[0].failed = r.records[1].failed = true;
    r.records[0].metrics.clear();
    r.records[1].metrics.clear();
    summarize(r);
    CHECK(r.cells[0].aborted);
    CHECK(r.cells[0].failures == 2);
    CHECK(r.cells[0].metrics.empty());
}

TEST_CASE("small experiment runs every estimator and is independent of jobs") {
    const auto cfg = ExperimentConfig::from_json(small_config());
    const auto a = run(cfg, 1);
    const auto b = run(cfg, 3);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.cells.size() == 7);
    CHECK(a.records.size() == 21);
    for (const auto& c : a.cells) {
        CHECK(c.count == 3);
        CHECK(c.metrics.count("theta_error") == 1);
        CHECK(c.metrics.count("acf_error") == 1);
    }
    // APE(1) and LSE share the data, so their estimates agree.
    for (int r = 0; r < 3; ++r) {
        const auto& lse = a.records[static_cast<std::size_t>(r)];
        const auto& ape1 = a.records[static_cast<std::size_t>(3 + r)];
        CHECK(lse.theta_hat[0] == doctest::Approx(ape1.theta_hat[0]).epsilon(1e-8));
    }
}

TEST_CASE("config schema errors") {
    auto j = small_config();
    j.erase("sample_sizes");
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), InvalidArgument);
    j = small_config();
    j["estimators"] = json::array({{{"name", "magic"}}});
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), InvalidArgument);
    j = small_config();
    j["estimators"] = json::array({{{"name", "ape"}, {"m", {100}}}});
    CHECK_THROWS_AS(run(ExperimentConfig::from_json(j)), InvalidArgument);
}

TEST_CASE("fractional-noise generator and stationary sampler") {
    auto j = small_config();
    j["generator"] = {{"family", "fractional-noise"}, {"d", 0.3}};
    j["estimators"] = json::array({{{"name", "ape"}, {"m", {1, 3}}}});
    j["metrics"] = {"acf_error"};
    const auto r = run(ExperimentConfig::from_json(j));
    CHECK(r.cells[0].metrics.count("acf_error") == 1);

    j = small_config();
    j["generator"] = {{"family", "ar"}, {"theta", {0, 0, 0, 0}}, {"theta_sampler", "stationary-uniform"},
                      {"sn", 0.3}, {"noise", {{"innovation_sd", 1.0}}}};
    j["fitted"] = {{"family", "ar"}, {"order", {{"policy", "aic"}, {"p_max", 6}}}};
    j["estimators"] = json::array({{{"name", "lse"}}});
    const auto s = run(ExperimentConfig::from_json(j));
    CHECK(s.cells[0].count + s.cells[0].failures == 3);
    for (const auto& rec : s.records) CHECK(rec.metrics.count("order") == 1);
}

TEST_CASE("SETAR study with cycle metrics") {
    const auto j = json::parse(R"({
        "name": "setar", "seed": 3, "replications": 2, "sample_sizes": [60],
        "generator": {"family": "setar", "theta": [3, 1, -3, 1, 0, 2], "noise": {"measurement_sd": 1.0}},
        "fitted": {"family": "setar", "theta": [0, 0, 0, 0, 0, 2]},
        "fit_options": {"restarts": 2},
        "estimators": [{"name": "ape", "m": [1, "T"]}],
        "metrics": ["matching_error", "matching_error_states", "cycle_period", "correct_period"],
        "metric_options": {"correct_period": 6}
    })");
    const auto r = run(ExperimentConfig::from_json(j));
    REQUIRE(r.cells.size() == 2);
    CHECK(r.cells[1].m == 60);
    for (const auto& c : r.cells) {
        CHECK(c.metrics.count("correct_period") == 1);
        CHECK(c.metrics.count("matching_error") == 1);
    }
}

TEST_CASE("real-data pipeline errors") {
    auto j = json::parse(R"({"name": "x", "pipeline": "sunspots", "data": {"path": "/nonexistent"}})");
    CHECK_THROWS_AS(run(ExperimentConfig::from_json(j)), DataError);
    j["pipeline"] = "unknown";
    CHECK_THROWS_AS(run(ExperimentConfig::from_json(j)), InvalidArgument);
}

TEST_CASE("sea-level pipeline on a synthetic AR(2) series") {
    const auto y = simulate(ModelSpec::linear_ar({0.5, 0.3}, {1.0, 0.0}), 140, 3, std::vector<double>{0.0, 0.0});
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < y.size(); ++t) rows.push_back({static_cast<double>(t), y[t]});
    const auto path = temp_path("sea.txt");
    write_lines(path, "t level", rows);
    auto j = json::parse(R"({"name": "sea", "pipeline": "sea-level", "seed": 1, "p_max": 4, "ape_m": 5,
                             "window": 100, "stride": 20, "horizons": 6})");
    j["data"] = {{"path", path}, {"value_column", "level"}};
    const auto r = run(ExperimentConfig::from_json(j));
    CHECK(r.extras["window_starts"] == json({0, 20, 40}));
    CHECK(r.extras["order"].get<int>() >= 1);
    REQUIRE(r.cells.size() == 3);
    for (const auto& c : r.cells) {
        CHECK(c.count == 3);
        CHECK(c.metrics.contains("mse_1"));
        CHECK(c.metrics.contains("mse_6"));
        // In-sample one-step error of LSE is the smallest achievable for k = 1.
        if (c.estimator != "lse") {
            CHECK(c.metrics.at("mse_1").mean >= r.cells[0].metrics.at("mse_1").mean - 1e-12);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("sunspots pipeline windows, absent m > T cells and the data period") {
    auto j = json::parse(R"({"name": "sun", "pipeline": "sunspots", "seed": 2, "window_lengths": [35, 50],
                             "m": [1, 10, 50], "stride": 100, "fit_options": {"restarts": 2}})");
    j["data"] = {{"path", std::string(FEATMATCH_DATA_DIR) + "/sunspots_annual_1700_2008.txt"},
                 {"value_column", "sunspots"}};
    const auto r = run(ExperimentConfig::from_json(j), 2);
    CHECK(std::abs(r.extras["data_period"].get<double>() - 11.0) < 1.5);
    bool has_35_50 = false;
    for (const auto& c : r.cells) has_35_50 = has_35_50 || (c.T == 35 && c.m == 50);
    CHECK_FALSE(has_35_50);
    CHECK(r.cells.size() == 5);
    for (const auto& c : r.cells) CHECK(c.metrics.contains("unstable"));
}

TEST_CASE("blowflies pipeline on a simulated series") {
    const auto m = ModelSpec::blowfly({20.0, 590.0, 0.76, 0.85}, 8, {100.0, 0.0});
    const auto y = simulate(m, 120, 4, std::vector<double>(8, 500.0));
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < y.size(); ++t) rows.push_back({std::max(y[t], 1.0)});
    const auto path = temp_path("flies.txt");
    write_lines(path, "", rows);
    auto j = json::parse(R"({"name": "flies", "pipeline": "blowflies", "seed": 3, "length": 100, "tau": 8,
                             "tau_sweep": [6, 9], "fit_options": {"restarts": 2}})");
    j["data"] = {{"path", path}};
    const auto r = run(ExperimentConfig::from_json(j));
    REQUIRE(r.records.size() == 2);
    CHECK(r.cells[1].m == 100);
    CHECK(r.extras["tau_sweep"]["tau"] == json({6, 7, 8, 9}));
    CHECK(r.extras["tau_sweep"]["lse"]["period"].size() == 4);
    CHECK(r.extras["fits"].contains("ape"));
    j["length"] = 500;
    CHECK_THROWS_AS(run(ExperimentConfig::from_json(j)), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("measles pipeline on a simulated seasonal SIR series") {
    SirStructure sir;
    sir.season_length = 4;
    sir.births.assign(160, 30.0);
    const std::vector<double> th{std::log(1.3 / 1000.0), std::log(0.8 / 1000.0), std::log(1.0 / 1000.0),
                                 std::log(0.9 / 1000.0), 1000.0};
    const auto model = ModelSpec::discrete_sir(th, sir);
    const auto orbit = skeleton_orbit(model, std::vector<double>{30.0, 1000.0}, 159);
    REQUIRE(orbit.size() == 160);
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < orbit.size(); ++t) rows.push_back({orbit[t], 30.0, 0.1});
    const auto path = temp_path("measles.txt");
    write_lines(path, "infections births vacc", rows);
    auto j = json::parse(R"({"name": "measles", "pipeline": "measles", "seed": 4, "season_length": 4,
                             "m": [1, 8], "birth_grid": [20, 40, 10], "fit_options": {"restarts": 1},
                             "sweep_burn_in": 80, "sweep_length": 64, "cycle_max_iter": 400, "max_period": 40})");
    j["data"] = {{"path", path}, {"infections", "infections"}, {"births", "births"}};
    const auto r = run(ExperimentConfig::from_json(j));
    REQUIRE(r.records.size() == 3);
    // Noise-free data: the full one-step fit recovers S0.
    CHECK(r.records[0].metrics.at("S0") == doctest::Approx(1000.0).epsilon(1e-3));
    CHECK(r.extras["beta_table"]["full-ape-1"].size() == 4);
    CHECK(r.extras["beta_table"].contains("reduced-ape-8"));
    CHECK(r.extras["birth_sweep"]["births"] == json({20.0, 30.0, 40.0}));
    j["data"]["vaccination_rate"] = "vacc";
    CHECK_NOTHROW(run(ExperimentConfig::from_json(j)));
    j["m"] = json::array({1000});
    CHECK_THROWS_AS(run(ExperimentConfig::from_json(j)), InvalidArgument);
    std::filesystem::remove(path);
}
