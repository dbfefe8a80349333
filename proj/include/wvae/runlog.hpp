#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wvae/common.hpp"

namespace wvae {

// Per-iteration loss record. Losses are negated ELBOs (minimized); total is
// recon plus the variant's divergence term. t_hat and beta are NaN when the
// scheduler is off.
struct LossBreakdown {
    long iteration = 0;
    double recon = 0.0;
    double kl = 0.0;
    double w2sq = 0.0;
    double t = 0.0;
    double t_hat = std::numeric_limits<double>::quiet_NaN();
    double beta = std::numeric_limits<double>::quiet_NaN();
    double lambda = 0.0;
    double total = 0.0;
};

struct RunLog {
    std::vector<LossBreakdown> rows;
    std::map<std::string, std::string> meta;  // sorted keys -> stable bytes

    const LossBreakdown& at_iteration(long it) const {
        for (const auto& r : rows)
            if (r.iteration == it) return r;
        throw DomainError("RunLog: no row for iteration " + std::to_string(it));
    }
    long last_iteration() const { return rows.empty() ? 0 : rows.back().iteration; }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline constexpr const char* kRunLogSchema = "wvae-runlog v1";
inline constexpr const char* kRunLogHeader = "iteration,recon,kl,w2sq,t,t_hat,beta,lambda,total";

inline void write_runlog_csv(const RunLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write run log: " + path);
    out << "# " << kRunLogSchema << "\n";
    for (const auto& [k, v] : log.meta) out << "# " << k << " = " << v << "\n";
    out << kRunLogHeader << "\n";
    for (const auto& r : log.rows) {
        out << r.iteration << ',' << format_double(r.recon) << ',' << format_double(r.kl) << ','
            << format_double(r.w2sq) << ',' << format_double(r.t) << ',' << format_double(r.t_hat)
            << ',' << format_double(r.beta) << ',' << format_double(r.lambda) << ','
            << format_double(r.total) << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

inline RunLog read_runlog_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run log: " + path);
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kRunLogSchema)
        throw FormatError("run log schema mismatch in " + path + " (expected '" + kRunLogSchema +
                          "')");
    RunLog log;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos) log.meta[line.substr(2, eq - 2)] = line.substr(eq + 3);
            continue;
        }
        if (!header_seen) {
            if (line != kRunLogHeader) throw FormatError("run log header mismatch in " + path);
            header_seen = true;
            continue;
        }
        LossBreakdown r;
        std::istringstream ss(line);
        std::string cell;
        auto next = [&]() -> std::string {
            if (!std::getline(ss, cell, ',')) throw FormatError("short run log row in " + path);
            return cell;
        };
        r.iteration = std::stol(next());
        r.recon = std::stod(next());
        r.kl = std::stod(next());
        r.w2sq = std::stod(next());
        r.t = std::stod(next());
        r.t_hat = std::stod(next());
        r.beta = std::stod(next());
        r.lambda = std::stod(next());
        r.total = std::stod(next());
        log.rows.push_back(r);
    }
    return log;
}

}  // namespace wvae
