#include "featmatch/data_io.hpp"

#include "featmatch/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace featmatch {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    if (delimiter == 0) {
        std::istringstream is(line);
        std::string tok;
        while (is >> tok) out.push_back(tok);
        return out;
    }
    std::string cur;
    for (char ch : line) {
        if (ch == delimiter) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

bool parse_double(const std::string& tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace

const std::vector<double>& Table::column(const std::string& key) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == key) return columns[i];
    std::size_t idx = 0;
    const auto res = std::from_chars(key.data(), key.data() + key.size(), idx);
    if (res.ec == std::errc() && res.ptr == key.data() + key.size() && idx >= 1 && idx <= columns.size()) {
        return columns[idx - 1];
    }
    throw DataError("column '" + key + "' not found");
}

Table load_table(const std::string& path, char delimiter) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    Table table;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    char delim = delimiter;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto nonblank = line.find_first_not_of(" \t");
        if (nonblank == std::string::npos || line[nonblank] == '#') continue;
        if (first && delimiter == 0) delim = line.find(',') != std::string::npos ? ',' : 0;
        const auto toks = split_line(line, delim);
        if (first) {
            first = false;
            std::vector<double> vals(toks.size());
            bool numeric = true;
            for (std::size_t i = 0; i < toks.size(); ++i) numeric = numeric && parse_double(toks[i], vals[i]);
            table.columns.assign(toks.size(), {});
            if (!numeric) {
                table.names = toks;
                continue;
            }
            for (std::size_t i = 0; i < toks.size(); ++i) table.names.push_back(std::to_string(i + 1));
        }
        if (toks.size() != table.columns.size()) {
            throw DataError(path + ": line " + std::to_string(lineno) + ": expected " +
                            std::to_string(table.columns.size()) + " fields, found " + std::to_string(toks.size()));
        }
        for (std::size_t i = 0; i < toks.size(); ++i) {
            double v = 0.0;
            if (!parse_double(toks[i], v)) {
                throw DataError(path + ": line " + std::to_string(lineno) + ": cannot parse '" + toks[i] + "'");
            }
            if (!std::isfinite(v)) {
                throw DataError(path + ": line " + std::to_string(lineno) + ": non-finite value '" + toks[i] + "'");
            }
            table.columns[i].push_back(v);
        }
    }
    if (table.rows() == 0) throw DataError(path + ": no data rows");
    return table;
}

TimeSeries load_series(const DatasetDescriptor& desc) {
    const auto table = load_table(desc.path, desc.delimiter);
    const auto& col = desc.value_column.empty() ? table.columns.back() : table.column(desc.value_column);
    if (col.size() < desc.min_length || col.size() > desc.max_length) {
        throw DataError(desc.path + ": series length " + std::to_string(col.size()) + " outside the expected range");
    }
    return TimeSeries(col);
}

TimeSeries load_series(const std::string& path) {
    DatasetDescriptor d;
    d.path = path;
    return load_series(d);
}

TimeSeries adjust_births(const TimeSeries& births, const TimeSeries& rate) {
    if (births.size() != rate.size()) throw InvalidArgument("adjust_births: length mismatch");
    std::vector<double> out(births.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (rate[i] < 0.0 || rate[i] > 1.0) {
            throw InvalidArgument("adjust_births: vaccination rate outside [0, 1] at index " + std::to_string(i));
        }
        out[i] = births[i] * (1.0 - rate[i]);
    }
    return TimeSeries(std::move(out), births.start_index(), births.step());
}

void write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + path + "'");
        out << text;
        if (!out) throw DataError("cannot write '" + path + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot write '" + path + "': " + ec.message());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_series(const std::string& path, const TimeSeries& series) {
    std::string text = "t value\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        text += std::to_string(series.start_index() + static_cast<std::int64_t>(i)) + " " + fmt17(series[i]) + "\n";
    }
    write_text(path, text);
}

nlohmann::json to_json(const FitResult& fit) {
    return {{"estimator", fit.estimator},
            {"m", fit.m},
            {"theta_hat", fit.theta_hat},
            {"objective_value", fit.objective_value},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"gradient_norm", fit.gradient_norm},
            {"restarts_used", fit.restarts_used},
            {"objective_trace", fit.objective_trace},
            {"weights", fit.weights}};
}

FitResult fit_from_json(const nlohmann::json& j) {
    try {
        FitResult f;
        f.estimator = j.at("estimator").get<std::string>();
        f.m = j.at("m").get<int>();
        f.theta_hat = j.at("theta_hat").get<std::vector<double>>();
        f.objective_value = j.at("objective_value").get<double>();
        f.iterations = j.at("iterations").get<int>();
        f.converged = j.at("converged").get<bool>();
        f.gradient_norm = j.at("gradient_norm").get<double>();
        f.restarts_used = j.at("restarts_used").get<int>();
        f.objective_trace = j.value("objective_trace", std::vector<double>{});
        f.weights = j.value("weights", std::vector<double>{});
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("fit result schema: ") + e.what());
    }
}

nlohmann::json to_json(const ExperimentResult& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json metrics = nlohmann::json::object();
        for (const auto& [k, s] : c.metrics) {
            nlohmann::json m = {{"mean", s.mean}, {"n", s.n}};
            m["sd"] = s.sd ? nlohmann::json(*s.sd) : nlohmann::json(nullptr);
            metrics[k] = m;
        }
        cells.push_back({{"id", c.id()},
                         {"T", c.T},
                         {"setting", c.setting},
                         {"estimator", c.estimator},
                         {"m", c.m},
                         {"count", c.count},
                         {"failures", c.failures},
                         {"aborted", c.aborted},
                         {"metrics", metrics}});
    }
    nlohmann::json records = nlohmann::json::array();
    for (const auto& rec : r.records) {
        records.push_back({{"replication", rec.replication},
                           {"cell", rec.cell},
                           {"failed", rec.failed},
                           {"error", rec.error},
                           {"theta_hat", rec.theta_hat},
                           {"metrics", rec.metrics}});
    }
    return {{"schema_version", r.schema_version},
            {"name", r.name},
            {"seed", r.seed},
            {"replications", r.replications},
            {"config", r.config},
            {"cells", cells},
            {"records", records},
            {"extras", r.extras}};
}

ExperimentResult result_from_json(const nlohmann::json& j) {
    try {
        ExperimentResult r;
        r.schema_version = j.at("schema_version").get<std::string>();
        if (r.schema_version != "1") throw DataError("unsupported schema_version '" + r.schema_version + "'");
        r.name = j.at("name").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.replications = j.at("replications").get<int>();
        r.config = j.at("config");
        for (const auto& c : j.at("cells")) {
            Cell cell;
            cell.T = c.at("T").get<int>();
            cell.setting = c.at("setting").get<std::string>();
            cell.estimator = c.at("estimator").get<std::string>();
            cell.m = c.at("m").get<int>();
            cell.count = c.at("count").get<int>();
            cell.failures = c.at("failures").get<int>();
            cell.aborted = c.at("aborted").get<bool>();
            for (const auto& [k, v] : c.at("metrics").items()) {
                MetricSummary s;
                s.mean = v.at("mean").get<double>();
                s.n = v.at("n").get<int>();
                if (!v.at("sd").is_null()) s.sd = v.at("sd").get<double>();
                cell.metrics[k] = s;
            }
            r.cells.push_back(std::move(cell));
        }
        for (const auto& rj : j.at("records")) {
            Record rec;
            rec.replication = rj.at("replication").get<int>();
            rec.cell = rj.at("cell").get<std::string>();
            rec.failed = rj.at("failed").get<bool>();
            rec.error = rj.at("error").get<std::string>();
            rec.theta_hat = rj.at("theta_hat").get<std::vector<double>>();
            rec.metrics = rj.at("metrics").get<std::map<std::string, double>>();
            r.records.push_back(std::move(rec));
        }
        r.extras = j.value("extras", nlohmann::json::object());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("result schema: ") + e.what());
    }
}

std::string records_csv(const ExperimentResult& r) {
    std::set<std::string> keys;
    std::size_t ntheta = 0;
    for (const auto& rec : r.records) {
        for (const auto& [k, v] : rec.metrics) keys.insert(k);
        ntheta = std::max(ntheta, rec.theta_hat.size());
    }
    std::string out = "replication,cell,failed,error";
    for (std::size_t i = 0; i < ntheta; ++i) out += ",theta_hat_" + std::to_string(i + 1);
    for (const auto& k : keys) out += "," + csv_escape(k);
    out += "\n";
    for (const auto& rec : r.records) {
        out += std::to_string(rec.replication) + "," + csv_escape(rec.cell) + "," + (rec.failed ? "1" : "0") + "," +
               csv_escape(rec.error);
        for (std::size_t i = 0; i < ntheta; ++i) out += "," + (i < rec.theta_hat.size() ? fmt17(rec.theta_hat[i]) : "");
        for (const auto& k : keys) {
            const auto it = rec.metrics.find(k);
            out += "," + (it == rec.metrics.end() ? std::string() : fmt17(it->second));
        }
        out += "\n";
    }
    return out;
}

std::string summary_csv(const ExperimentResult& r) {
    std::string out = "cell,T,setting,estimator,m,count,failures,aborted,metric,mean,sd,n\n";
    for (const auto& c : r.cells) {
        const std::string head = csv_escape(c.id()) + "," + std::to_string(c.T) + "," + csv_escape(c.setting) + "," +
                                 csv_escape(c.estimator) + "," + std::to_string(c.m) + "," + std::to_string(c.count) +
                                 "," + std::to_string(c.failures) + "," + (c.aborted ? "1" : "0");
        if (c.metrics.empty()) out += head + ",,,,\n";
        for (const auto& [k, s] : c.metrics) {
            out += head + "," + csv_escape(k) + "," + fmt17(s.mean) + "," + (s.sd ? fmt17(*s.sd) : std::string()) +
                   "," + std::to_string(s.n) + "\n";
        }
    }
    return out;
}

void save_results(const ExperimentResult& result, const std::string& path, ResultFormat format) {
    if (format == ResultFormat::Json) {
        write_text(path, to_json(result).dump(2) + "\n");
        return;
    }
    write_text(path, records_csv(result));
    const std::filesystem::path p(path);
    const auto summary = (p.parent_path() / (p.stem().string() + ".summary.csv")).string();
    write_text(summary, summary_csv(result));
}

ExperimentResult load_results(const std::string& path) {
    const auto text = read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
    return result_from_json(j);
}

}  // namespace featmatch
