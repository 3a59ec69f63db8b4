#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ouperturb/types.hpp"

namespace oup {

/// Result of one inequality or identity check. margin = rhs - lhs;
/// pass <=> margin >= -error_budget. error_budget is the sum of declared
/// sub-tolerances (quadrature + solver + MC), never a free fudge factor.
struct CheckReport {
    std::string check_id;
    std::string paper_ref;
    std::vector<std::pair<std::string, std::string>> params;  // sorted by key on emit
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    bool pass = false;
    double error_budget = 0.0;
    std::uint64_t seed = 0;
    std::string sampler;
};

inline CheckReport make_check(std::string check_id, std::string paper_ref, double lhs,
                              double rhs, double error_budget, std::uint64_t seed = 0,
                              std::string sampler = {},
                              std::vector<std::pair<std::string, std::string>> params = {}) {
    CheckReport r;
    r.check_id = std::move(check_id);
    r.paper_ref = std::move(paper_ref);
    r.lhs = lhs;
    r.rhs = rhs;
    r.margin = rhs - lhs;
    r.error_budget = error_budget;
    r.pass = r.margin >= -error_budget;
    r.seed = seed;
    r.sampler = std::move(sampler);
    r.params = std::move(params);
    return r;
}

/// Error decay along a parameter sweep with a log-log least-squares rate.
struct ConvergenceTable {
    std::string parameter;
    std::vector<double> values;
    std::vector<double> errors;
    double fitted_rate = 0.0;
    bool rate_defined = false;
    std::string notes;
};

/// Least-squares slope of log(error) against log(value). Zero or non-finite
/// errors leave the rate undefined and flag the table.
inline void fit_rate(ConvergenceTable& t) {
    require(t.values.size() == t.errors.size(), "fit_rate: values/errors length mismatch");
    for (std::size_t i = 1; i < t.values.size(); ++i)
        require((t.values[i] > t.values[i - 1]) == (t.values[1] > t.values[0]) &&
                    t.values[i] != t.values[i - 1],
                "fit_rate: values must be strictly monotone");
    for (double e : t.errors)
        require(std::isfinite(e), "fit_rate: errors must be finite");
    t.rate_defined = t.values.size() >= 2;
    for (double e : t.errors)
        if (e <= 0.0) t.rate_defined = false;
    if (!t.rate_defined) {
        t.fitted_rate = 0.0;
        if (!t.notes.empty()) t.notes += "; ";
        t.notes += t.values.size() < 2 ? "too few points for a rate" : "zero error, rate undefined";
        return;
    }
    const std::size_t n = t.values.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(t.values[i]), y = std::log(t.errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    t.fitted_rate = (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace detail {

/// Shortest-is-not-wanted float formatting: fixed 17 significant digits so
/// reports are byte-stable across platforms and serializer versions.
inline std::string fmt_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    return out;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        out += ch;
    }
    out += '"';
    return out;
}

}  // namespace detail

/// JSON array of check objects; keys sorted, params map sorted by key.
inline std::string to_json(const std::vector<CheckReport>& reports) {
    using detail::fmt_double;
    using detail::json_escape;
    std::string out = "[";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        auto params = r.params;
        std::sort(params.begin(), params.end());
        out += i ? ",\n " : "\n ";
        out += "{\"check_id\":\"" + json_escape(r.check_id) + "\"";
        out += ",\"error_budget\":" + fmt_double(r.error_budget);
        out += ",\"lhs\":" + fmt_double(r.lhs);
        out += ",\"margin\":" + fmt_double(r.margin);
        out += ",\"paper_ref\":\"" + json_escape(r.paper_ref) + "\"";
        out += ",\"params\":{";
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (k) out += ",";
            out += "\"" + json_escape(params[k].first) + "\":\"" + json_escape(params[k].second) +
                   "\"";
        }
        out += "}";
        out += ",\"pass\":";
        out += r.pass ? "true" : "false";
        out += ",\"rhs\":" + fmt_double(r.rhs);
        out += ",\"sampler\":\"" + json_escape(r.sampler) + "\"";
        out += ",\"seed\":" + std::to_string(r.seed);
        out += "}";
    }
    out += "\n]\n";
    return out;
}

inline std::string to_csv(const std::vector<CheckReport>& reports) {
    using detail::csv_escape;
    using detail::fmt_double;
    std::string out = "check_id,paper_ref,lhs,rhs,margin,pass,seed\n";
    for (const auto& r : reports) {
        out += csv_escape(r.check_id) + "," + csv_escape(r.paper_ref) + "," + fmt_double(r.lhs) +
               "," + fmt_double(r.rhs) + "," + fmt_double(r.margin) + "," +
               (r.pass ? "true" : "false") + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

inline std::string to_json(const ConvergenceTable& t) {
    using detail::fmt_double;
    std::string out = "{\"errors\":[";
    for (std::size_t i = 0; i < t.errors.size(); ++i)
        out += (i ? "," : "") + fmt_double(t.errors[i]);
    out += "],\"fitted_rate\":";
    out += t.rate_defined ? fmt_double(t.fitted_rate) : "null";
    out += ",\"notes\":\"" + detail::json_escape(t.notes) + "\"";
    out += ",\"parameter\":\"" + detail::json_escape(t.parameter) + "\"";
    out += ",\"values\":[";
    for (std::size_t i = 0; i < t.values.size(); ++i)
        out += (i ? "," : "") + fmt_double(t.values[i]);
    out += "]}\n";
    return out;
}

inline std::string to_csv(const ConvergenceTable& t) {
    using detail::fmt_double;
    std::string out = detail::csv_escape(t.parameter) + ",error\n";
    for (std::size_t i = 0; i < t.values.size(); ++i)
        out += fmt_double(t.values[i]) + "," + fmt_double(t.errors[i]) + "\n";
    out += "rate," + (t.rate_defined ? fmt_double(t.fitted_rate) : std::string("undefined")) + "\n";
    return out;
}

template <class Reportable>
inline void emit_report(const Reportable& r, const std::string& format, const std::string& path) {
    require(format == "json" || format == "csv", "emit_report: format must be json or csv");
    const std::string payload = format == "json" ? to_json(r) : to_csv(r);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("emit_report: cannot open '" + path + "' for writing");
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    f.close();
    if (!f) throw InvalidArgument("emit_report: write to '" + path + "' failed");
}

}  // namespace oup
