#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvmselect/harness.hpp"
#include "lvmselect/types.hpp"

namespace lvmselect {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw IoError("not a number: '" + s + "'");
    return v;
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename into " + path.string() + ": " + ec.message());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string sweep_csv(const std::vector<SweepRecord>& records) {
    std::string s = "method,K,seed,objective,selected_k,iterations,wall_ms,status\n";
    for (const auto& r : records) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        s += std::string(method_name(r.method)) + "," + std::to_string(r.K) + "," + std::to_string(r.seed) + "," +
             format_number(r.objective) + "," + std::to_string(r.selected_k) + "," + std::to_string(r.iterations) + "," +
             format_number(r.wall_ms) + "," + status + "\n";
    }
    return s;
}

inline void write_reports(const std::vector<SweepRecord>& records, const std::filesystem::path& path) {
    write_atomically(path, sweep_csv(records));
}

inline std::vector<SweepRecord> read_reports(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    std::vector<SweepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) throw IoError(path.string() + ": expected 8 fields in '" + line + "'");
        SweepRecord r;
        r.method = parse_method(f[0]);
        r.K = std::stoul(f[1]);
        r.seed = std::stoull(f[2]);
        r.objective = parse_number(f[3]);
        r.selected_k = std::stoul(f[4]);
        r.iterations = std::stoul(f[5]);
        r.wall_ms = parse_number(f[6]);
        r.status = f[7];
        out.push_back(r);
    }
    return out;
}

inline std::string data_csv(const Matrix& x) {
    std::string s;
    for (std::size_t j = 0; j < x.cols(); ++j) s += (j ? ",x" : "x") + std::to_string(j + 1);
    s += "\n";
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (j) s += ",";
            s += format_number(x(i, j));
        }
        s += "\n";
    }
    return s;
}

inline Matrix read_data_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
    const std::size_t d = split_csv_line(line).size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != d) throw IoError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                                         std::to_string(f.size()) + " fields, expected " + std::to_string(d));
        for (const auto& v : f) values.push_back(parse_number(v));
        ++rows;
    }
    if (rows == 0) throw IoError(path.string() + ": no observations");
    return Matrix(rows, d, std::move(values));
}

inline std::string skew_csv(const SkewTable& t) {
    std::string s = "n,tau,q_binomial,penalty,skewed\n";
    for (const auto& r : t.rows)
        s += std::to_string(r.n) + "," + format_number(r.tau) + "," + format_number(r.q_binomial) + "," +
             format_number(r.penalty) + "," + format_number(r.skewed) + "\n";
    return s;
}

inline nlohmann::json to_json(const PruneEvent& e) {
    return {{"iteration", e.iteration},
            {"k_before", e.k_before},
            {"k_after", e.k_after},
            {"dropped_eigenvalues", e.dropped_eigenvalues},
            {"objective_before", e.objective_before},
            {"objective_after", e.objective_after},
            {"accepted", e.accepted}};
}

inline nlohmann::json to_json(const FitReport& r) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.prune_events) events.push_back(to_json(e));
    return {{"method", r.method},
            {"model", r.model},
            {"seed", r.seed},
            {"k_init", r.k_init},
            {"selected_k", r.selected_k},
            {"final_objective", r.final_objective},
            {"objective_trajectory", r.objective_trajectory},
            {"k_trajectory", r.k_trajectory},
            {"prune_events", events},
            {"iterations", r.iterations},
            {"warmup_iterations", r.warmup_iterations},
            {"converged", r.converged},
            {"wall_ms", r.wall_ms}};
}

inline FitReport report_from_json(const nlohmann::json& j) {
    FitReport r;
    r.method = j.at("method").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k_init = j.at("k_init").get<std::size_t>();
    r.selected_k = j.at("selected_k").get<std::size_t>();
    r.final_objective = j.at("final_objective").get<double>();
    r.objective_trajectory = j.at("objective_trajectory").get<std::vector<double>>();
    r.k_trajectory = j.at("k_trajectory").get<std::vector<std::size_t>>();
    for (const auto& e : j.at("prune_events")) {
        PruneEvent p;
        p.iteration = e.at("iteration").get<std::size_t>();
        p.k_before = e.at("k_before").get<std::size_t>();
        p.k_after = e.at("k_after").get<std::size_t>();
        p.dropped_eigenvalues = e.at("dropped_eigenvalues").get<std::vector<double>>();
        p.objective_before = e.at("objective_before").get<double>();
        p.objective_after = e.at("objective_after").get<double>();
        p.accepted = e.at("accepted").get<bool>();
        r.prune_events.push_back(std::move(p));
    }
    r.iterations = j.at("iterations").get<std::size_t>();
    r.warmup_iterations = j.at("warmup_iterations").get<std::size_t>();
    r.converged = j.at("converged").get<bool>();
    r.wall_ms = j.at("wall_ms").get<double>();
    return r;
}

}  // namespace lvmselect
