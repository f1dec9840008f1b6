#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace dadet {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& path, int line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ParseError(path, line, "bad number '" + s + "'");
    return v;
}

// Per-classifier columns only exist when there is more than one classifier.
bool per_classifier_columns(const TrainingLog& log) { return log.classifier_names.size() > 1; }

}  // namespace

bool TrainingLog::same_losses(const TrainingLog& other) const {
    if (classifier_names != other.classifier_names || records.size() != other.records.size()) return false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const LogRecord& a = records[i];
        const LogRecord& b = other.records[i];
        if (a.iteration != b.iteration || a.detection != b.detection || a.domain_per_map != b.domain_per_map ||
            a.domain != b.domain || a.total != b.total || a.learning_rate != b.learning_rate) {
            return false;
        }
    }
    return true;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write log " + path.string());
    std::string classifiers;
    for (const std::string& c : classifier_names) classifiers += (classifiers.empty() ? "" : "+") + c;
    f << "# configured_iterations=" << configured_iterations << "\n";
    f << "# classifiers=" << (classifiers.empty() ? "none" : classifiers) << "\n";
    f << "# config=" << config.dump() << "\n";
    f << "iteration,l_det";
    if (per_classifier_columns(*this)) {
        for (const std::string& c : classifier_names) f << ",l_dc_" << c;
    }
    if (!classifier_names.empty()) f << ",l_dc_avg";
    f << ",l_total,lr,elapsed_s\n";
    for (const LogRecord& r : records) {
        f << r.iteration << ',' << fmt(r.detection);
        if (per_classifier_columns(*this)) {
            for (double v : r.domain_per_map) f << ',' << fmt(v);
        }
        if (!classifier_names.empty()) f << ',' << fmt(r.domain);
        f << ',' << fmt(r.total) << ',' << fmt(r.learning_rate) << ',' << fmt(r.elapsed_seconds) << '\n';
    }
    if (!f) throw DataError("write failed for log " + path.string());
}

TrainingLog TrainingLog::read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open log " + path.string());
    const std::string name = path.string();
    TrainingLog log;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::size_t columns = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("# configured_iterations=", 0) == 0) {
            log.configured_iterations = static_cast<long>(parse_double(line.substr(24), name, line_no));
            continue;
        }
        if (line.rfind("# classifiers=", 0) == 0) {
            const std::string list = line.substr(14);
            if (list != "none") {
                std::stringstream ss(list);
                std::string c;
                while (std::getline(ss, c, '+')) log.classifier_names.push_back(c);
            }
            continue;
        }
        if (line.rfind("# config=", 0) == 0) {
            try {
                log.config = nlohmann::json::parse(line.substr(9));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(name, line_no, std::string("bad config snapshot: ") + e.what());
            }
            continue;
        }
        if (line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            columns = split_csv(line).size();
            const std::size_t expected = 5 + (per_classifier_columns(log) ? log.classifier_names.size() : 0) +
                                         (log.classifier_names.empty() ? 0 : 1);
            if (columns != expected) throw ParseError(name, line_no, "header does not match classifier list");
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != columns) {
            throw ParseError(name, line_no,
                             "expected " + std::to_string(columns) + " cells, got " + std::to_string(cells.size()));
        }
        LogRecord r;
        std::size_t c = 0;
        r.iteration = static_cast<long>(parse_double(cells[c++], name, line_no));
        r.detection = parse_double(cells[c++], name, line_no);
        if (per_classifier_columns(log)) {
            for (std::size_t k = 0; k < log.classifier_names.size(); ++k) {
                r.domain_per_map.push_back(parse_double(cells[c++], name, line_no));
            }
        }
        if (!log.classifier_names.empty()) {
            r.domain = parse_double(cells[c++], name, line_no);
            if (!per_classifier_columns(log)) r.domain_per_map.push_back(r.domain);
        }
        r.total = parse_double(cells[c++], name, line_no);
        r.learning_rate = parse_double(cells[c++], name, line_no);
        r.elapsed_seconds = parse_double(cells[c++], name, line_no);
        log.records.push_back(std::move(r));
    }
    if (!header_seen) throw ParseError(name, line_no, "missing header row");
    return log;
}

ReportResult write_report(const TrainingLog& log, const std::filesystem::path& out_path) {
    ReportResult result;
    if (!log.complete()) {
        result.warnings.push_back("truncated log: " + std::to_string(log.records.size()) + " of " +
                                  std::to_string(log.configured_iterations) + " iterations");
    }
    if (log.classifier_names.empty()) result.warnings.push_back("log has no domain classifier losses");
    const bool multi = log.classifier_names.size() > 1;
    result.has_dissimilarity = multi;

    std::ofstream f(out_path);
    if (!f) throw DataError("cannot write report " + out_path.string());
    for (const std::string& w : result.warnings) f << "# warning: " << w << "\n";
    f << "iteration";
    for (const std::string& c : log.classifier_names) f << ",l_dc_" << c;
    if (multi) f << ",l_dc_avg,dissimilarity";
    f << "\n";
    for (const LogRecord& r : log.records) {
        f << r.iteration;
        if (!log.classifier_names.empty()) {
            for (double v : r.domain_per_map) f << ',' << fmt(v);
        }
        if (multi) {
            double spread = 0.0;
            for (std::size_t a = 0; a < r.domain_per_map.size(); ++a) {
                for (std::size_t b = a + 1; b < r.domain_per_map.size(); ++b) {
                    spread = std::max(spread, std::abs(r.domain_per_map[a] - r.domain_per_map[b]));
                }
            }
            f << ',' << fmt(r.domain) << ',' << fmt(spread);
        }
        f << '\n';
        ++result.rows;
    }
    if (!f) throw DataError("write failed for report " + out_path.string());
    return result;
}

}  // namespace dadet
