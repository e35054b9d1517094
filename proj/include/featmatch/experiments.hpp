#pragma once

#include "featmatch/estimators.hpp"
#include "featmatch/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace featmatch {

/// One fitted (data, estimator) pair of one replication.
struct Record {
    int replication = 0;
    std::string cell;  ///< cell id, see Cell::id
    bool failed = false;
    std::string error;
    std::vector<double> theta_hat;
    std::map<std::string, double> metrics;  ///< absent keys mean "not defined for this record"

    bool operator==(const Record&) const = default;
};

struct MetricSummary {
    double mean = 0.0;
    std::optional<double> sd;  ///< sample sd with divisor n - 1; absent when n == 1
    int n = 0;

    bool operator==(const MetricSummary&) const = default;
};

/// Aggregates over the replications of one (T, setting, estimator, m) combination.
/// Metrics named "correct_period" and "unstable" are 0/100 indicators, so their means
/// are frequencies in percent.
struct Cell {
    int T = 0;
    std::string setting;
    std::string estimator;
    int m = 0;
    int count = 0;     ///< successful replications
    int failures = 0;
    bool aborted = false;  ///< more than half the replications failed
    std::map<std::string, MetricSummary> metrics;

    std::string id() const;
    bool operator==(const Cell&) const = default;
};

struct ExperimentResult {
    std::string schema_version = "1";
    std::string name;
    std::uint64_t seed = 0;
    int replications = 0;
    nlohmann::json config;  ///< the configuration that produced the result
    std::vector<Cell> cells;
    std::vector<Record> records;
    nlohmann::json extras = nlohmann::json::object();  ///< pipeline-specific tables and matrices

    bool operator==(const ExperimentResult&) const = default;
};

/// Declarative experiment description; see README for the JSON grammar.
struct ExperimentConfig {
    nlohmann::json raw;

    std::string name;
    std::uint64_t seed = 1;
    int replications = 200;
    std::vector<int> sample_sizes;
    std::optional<std::string> pipeline;  ///< real-data pipeline instead of a simulation study
    bool keep_records = true;

    /// Throws InvalidArgument (schema) when a required key is missing or malformed.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

/// Monte Carlo study: simulate, fit each estimator on the shared data, compute metrics.
/// Replication r of data cell c uses seed derive_seed(seed, r, c), so results do not
/// depend on `jobs`.
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1);

/// Real-data analyses: "sea-level", "sunspots", "blowflies", "measles".
ExperimentResult run_real_data(const ExperimentConfig& config, int jobs = 1);

/// Dispatches on config.pipeline.
ExperimentResult run(const ExperimentConfig& config, int jobs = 1);

/// Recomputes every cell's summary from the records.
void summarize(ExperimentResult& result);

/// Summary of a list of values: mean, sd (divisor n - 1, absent for n == 1).
MetricSummary summarize_values(const std::vector<double>& values);

/// Builds a model from a JSON description {"family", "theta", ...}.
ModelSpec model_from_json(const nlohmann::json& j);

}  // namespace featmatch
