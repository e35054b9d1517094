#pragma once

#include "featmatch/estimators.hpp"
#include "featmatch/experiments.hpp"
#include "featmatch/series.hpp"

#include <json.hpp>

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace featmatch {

/// Where a series lives and which column to read.
struct DatasetDescriptor {
    std::string name;
    std::string path;
    std::string value_column;  ///< header name or 1-based index; empty selects the last column
    char delimiter = 0;        ///< 0 detects comma or whitespace
    std::size_t min_length = 1;
    std::size_t max_length = std::numeric_limits<std::size_t>::max();
};

/// Numeric table with optional header. Lines starting with '#' and blank lines are skipped.
struct Table {
    std::vector<std::string> names;  ///< header names, or "1".."n" when there is no header
    std::vector<std::vector<double>> columns;

    std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
    /// Column by header name or 1-based index. Throws DataError.
    const std::vector<double>& column(const std::string& key) const;
};

/// Throws DataError on a missing file, ragged rows, or unparseable / non-finite values
/// (the message names the line).
Table load_table(const std::string& path, char delimiter = 0);
TimeSeries load_series(const DatasetDescriptor& desc);
TimeSeries load_series(const std::string& path);

/// births * (1 - rate); rates must lie in [0, 1] and lengths must match.
TimeSeries adjust_births(const TimeSeries& births, const TimeSeries& vaccination_rate);

/// Two columns "t value" with %.17g values.
void write_series(const std::string& path, const TimeSeries& series);

enum class ResultFormat { Json, Csv };

nlohmann::json to_json(const ExperimentResult& result);
ExperimentResult result_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

/// JSON: one document with schema_version "1". CSV: the per-record table at `path`
/// and the per-cell summary next to it as <stem>.summary.csv.
void save_results(const ExperimentResult& result, const std::string& path, ResultFormat format);
ExperimentResult load_results(const std::string& path);

/// CSV renderings used by save_results.
std::string records_csv(const ExperimentResult& result);
std::string summary_csv(const ExperimentResult& result);

/// Writes text atomically (temporary file then rename). Throws DataError.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace featmatch
