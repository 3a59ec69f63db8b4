#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ouperturb/fields.hpp"
#include "ouperturb/model.hpp"
#include "ouperturb/quadrature.hpp"
#include "ouperturb/sampling.hpp"
#include "ouperturb/sde.hpp"
#include "ouperturb/types.hpp"

namespace oup {

/// Minimal TOML-style config: `[section]` headers, `key = value` lines, `#`
/// comments. Values are booleans, integers, floats, quoted strings, or flat
/// numeric lists. Keys are addressed as "section.key"; every parse or lookup
/// error names the offending line.
class Config {
public:
    using Value = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

    static Config parse_string(const std::string& text, const std::string& origin = "config") {
        Config cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string body = strip_comment(line, cfg.where(lineno));
            const std::string t = trim(body);
            if (t.empty()) continue;
            if (t.front() == '[') {
                require(t.back() == ']', cfg.where(lineno) + ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                require(!section.empty(), cfg.where(lineno) + ": empty section name");
                continue;
            }
            const auto eq = t.find('=');
            require(eq != std::string::npos, cfg.where(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            require(!key.empty(), cfg.where(lineno) + ": empty key");
            require(!val.empty(), cfg.where(lineno) + ": empty value");
            const std::string full = section.empty() ? key : section + "." + key;
            require(cfg.entries_.find(full) == cfg.entries_.end(),
                    cfg.where(lineno) + ": duplicate key '" + full + "'");
            cfg.entries_[full] = {parse_value(val, cfg.where(lineno)), lineno};
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), "config: cannot open '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    bool has(const std::string& key) const { return entries_.find(key) != entries_.end(); }

    bool get_bool(const std::string& key) const {
        const auto& e = entry(key);
        require(std::holds_alternative<bool>(e.value), type_err(key, "a boolean"));
        return std::get<bool>(e.value);
    }
    std::int64_t get_int(const std::string& key) const {
        const auto& e = entry(key);
        require(std::holds_alternative<std::int64_t>(e.value), type_err(key, "an integer"));
        return std::get<std::int64_t>(e.value);
    }
    double get_float(const std::string& key) const {
        const auto& e = entry(key);
        if (std::holds_alternative<std::int64_t>(e.value))
            return static_cast<double>(std::get<std::int64_t>(e.value));
        require(std::holds_alternative<double>(e.value), type_err(key, "a number"));
        return std::get<double>(e.value);
    }
    std::string get_str(const std::string& key) const {
        const auto& e = entry(key);
        require(std::holds_alternative<std::string>(e.value), type_err(key, "a string"));
        return std::get<std::string>(e.value);
    }
    std::vector<double> get_list(const std::string& key) const {
        const auto& e = entry(key);
        require(std::holds_alternative<std::vector<double>>(e.value), type_err(key, "a list"));
        return std::get<std::vector<double>>(e.value);
    }

    bool get_bool(const std::string& key, bool dflt) const {
        return has(key) ? get_bool(key) : dflt;
    }
    std::int64_t get_int(const std::string& key, std::int64_t dflt) const {
        return has(key) ? get_int(key) : dflt;
    }
    double get_float(const std::string& key, double dflt) const {
        return has(key) ? get_float(key) : dflt;
    }
    std::string get_str(const std::string& key, const std::string& dflt) const {
        return has(key) ? get_str(key) : dflt;
    }

private:
    struct Entry {
        Value value;
        int line = 0;
    };

    std::map<std::string, Entry> entries_;
    std::string origin_ = "config";

    std::string where(int line) const { return origin_ + ":" + std::to_string(line); }

    const Entry& entry(const std::string& key) const {
        const auto it = entries_.find(key);
        require(it != entries_.end(), origin_ + ": missing key '" + key + "'");
        return it->second;
    }

    std::string type_err(const std::string& key, const std::string& want) const {
        return where(entry(key).line) + ": key '" + key + "' is not " + want;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    // removes a trailing # comment, respecting quoted strings
    static std::string strip_comment(const std::string& s, const std::string& where) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        require(!quoted, where + ": unterminated string");
        return s;
    }

    static double parse_number(const std::string& t, const std::string& where) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            throw InvalidArgument(where + ": malformed number '" + t + "'");
        }
        require(used == t.size(), where + ": malformed number '" + t + "'");
        return v;
    }

    static Value parse_value(const std::string& t, const std::string& where) {
        if (t == "true") return true;
        if (t == "false") return false;
        if (t.front() == '"') {
            require(t.size() >= 2 && t.back() == '"', where + ": unterminated string");
            return t.substr(1, t.size() - 2);
        }
        if (t.front() == '[') {
            require(t.back() == ']', where + ": unterminated list");
            std::vector<double> vals;
            std::string inner = t.substr(1, t.size() - 2);
            std::size_t pos = 0;
            while (pos <= inner.size()) {
                const auto comma = inner.find(',', pos);
                const std::string item =
                    trim(inner.substr(pos, comma == std::string::npos ? comma : comma - pos));
                if (!item.empty()) vals.push_back(parse_number(item, where));
                else
                    require(comma == std::string::npos && vals.empty(),
                            where + ": empty list element");
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            return vals;
        }
        const bool integral =
            t.find_first_not_of("+-0123456789") == std::string::npos && t.find_first_of("0123456789") != std::string::npos;
        if (integral) {
            try {
                return static_cast<std::int64_t>(std::stoll(t));
            } catch (const std::exception&) {
                throw InvalidArgument(where + ": malformed integer '" + t + "'");
            }
        }
        return parse_number(t, where);
    }
};

namespace detail {
inline Mat matrix_from_list(const std::vector<double>& vals, int dim, const std::string& key) {
    if (static_cast<int>(vals.size()) == dim) {
        Mat m = Mat::Zero(dim, dim);
        for (int k = 0; k < dim; ++k) m(k, k) = vals[static_cast<std::size_t>(k)];
        return m;
    }
    require(static_cast<int>(vals.size()) == dim * dim,
            "config: '" + key + "' needs dim or dim*dim entries");
    Mat m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = vals[static_cast<std::size_t>(i * dim + j)];
    return m;
}

inline Vec vec_from_list(const std::vector<double>& vals, int dim, const std::string& key) {
    require(static_cast<int>(vals.size()) == dim, "config: '" + key + "' needs dim entries");
    Vec v(dim);
    for (int k = 0; k < dim; ++k) v(k) = vals[static_cast<std::size_t>(k)];
    return v;
}
}  // namespace detail

/// [model]: dim, a_diag or a_matrix (row-major), q_diag or q_matrix,
/// optional omega.
inline OperatorModel model_from_config(const Config& cfg) {
    const int dim = static_cast<int>(cfg.get_int("model.dim"));
    require(dim >= 1, "config: model.dim must be >= 1");
    const std::string a_key = cfg.has("model.a_matrix") ? "model.a_matrix" : "model.a_diag";
    const std::string q_key = cfg.has("model.q_matrix") ? "model.q_matrix" : "model.q_diag";
    const Mat a = detail::matrix_from_list(cfg.get_list(a_key), dim, a_key);
    const Mat q = detail::matrix_from_list(cfg.get_list(q_key), dim, q_key);
    if (cfg.has("model.omega")) return build_model(dim, a, q, cfg.get_float("model.omega"));
    return build_model(dim, a, q);
}

/// [phi]: kind in {cos, sin, const}; dirs (direction vector, normalized here)
/// for cos/sin; value for const.
inline ScalarField phi_from_config(const Config& cfg, int dim) {
    const std::string kind = cfg.get_str("phi.kind");
    if (kind == "const") return phi_const(dim, cfg.get_float("phi.value", 1.0));
    Vec a = cfg.has("phi.dirs") ? detail::vec_from_list(cfg.get_list("phi.dirs"), dim, "phi.dirs")
                                : unit_vector(dim, 0);
    require(a.norm() > 0.0, "config: phi.dirs must be nonzero");
    a /= a.norm();
    if (kind == "cos") return phi_cos(a);
    if (kind == "sin") return phi_sin(a);
    throw InvalidArgument("config: unknown phi.kind '" + kind + "'");
}

/// [drift]: name plus the builtin_field parameters scale, v, w, width.
inline VectorField drift_from_config(const Config& cfg, int dim) {
    const std::string name = cfg.get_str("drift.name", "zero");
    const double scale = cfg.get_float("drift.scale", 1.0);
    const double width = cfg.get_float("drift.width", 1.0);
    Vec v, w;
    if (cfg.has("drift.v")) v = detail::vec_from_list(cfg.get_list("drift.v"), dim, "drift.v");
    if (cfg.has("drift.w")) w = detail::vec_from_list(cfg.get_list("drift.w"), dim, "drift.w");
    return builtin_field(name, dim, scale, v, w, width);
}

/// [sup_sampler]: radius, count, seed.
inline SupSampler sampler_from_config(const Config& cfg) {
    SupSampler s;
    s.radius = cfg.get_float("sup_sampler.radius", s.radius);
    s.count = static_cast<int>(cfg.get_int("sup_sampler.count", s.count));
    s.seed = static_cast<std::uint64_t>(cfg.get_int("sup_sampler.seed", 0));
    require(s.radius > 0.0, "config: sup_sampler.radius must be positive");
    require(s.count >= 1, "config: sup_sampler.count must be >= 1");
    return s;
}

/// [quad]: mode in {tensor, mc}, nodes_per_dim, laplace_nodes, laplace_tmax,
/// mc_count, seed.
inline QuadratureSpec quad_from_config(const Config& cfg) {
    QuadratureSpec q;
    const std::string mode = cfg.get_str("quad.mode", "tensor");
    if (mode == "mc") q.mode = QuadratureSpec::Mode::MonteCarlo;
    else
        require(mode == "tensor", "config: quad.mode must be tensor or mc");
    q.nodes_per_dim = static_cast<int>(cfg.get_int("quad.nodes_per_dim", q.nodes_per_dim));
    q.laplace_nodes = static_cast<int>(cfg.get_int("quad.laplace_nodes", q.laplace_nodes));
    q.laplace_tmax = cfg.get_float("quad.laplace_tmax", q.laplace_tmax);
    q.mc_count = static_cast<int>(cfg.get_int("quad.mc_count", q.mc_count));
    q.seed = static_cast<std::uint64_t>(cfg.get_int("quad.seed", 0));
    q.validate();
    return q;
}

/// [sde]: dt, n_paths, seed, tail_rel.
inline SdeParams sde_from_config(const Config& cfg) {
    SdeParams p;
    p.dt = cfg.get_float("sde.dt", p.dt);
    p.n_paths = cfg.get_int("sde.n_paths", p.n_paths);
    p.seed = static_cast<std::uint64_t>(cfg.get_int("sde.seed", 0));
    p.tail_rel = cfg.get_float("sde.tail_rel", p.tail_rel);
    p.validate();
    return p;
}

}  // namespace oup
