#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "controllers.hpp"
#include "csv.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "linops.hpp"
#include "sim.hpp"

/**
 * @file config.hpp
 * @brief Flat key-value scenario files.
 *
 *     # comment
 *     [plant]
 *     preset = paper-2d
 *     A = 0 1; 19 -2
 *     [run]
 *     h = 0.3
 *
 * Keys are addressed as section.key. Matrices are rows separated by ';',
 * entries by spaces or commas.
 */

namespace smclab {

struct ConfigEntry {
    std::string value;
    std::size_t line = 0; // 0 for command-line overrides
};

using ConfigMap = std::map<std::string, ConfigEntry>;

inline constexpr std::string_view known_config_keys[] = {
    "plant.preset",       "plant.A",          "plant.B",          "plant.C",
    "plant.alpha",        "run.h",            "run.t_end",        "run.x0",
    "run.divergence_cap", "control.eq_law",   "control.us_law",   "control.epsilon",
    "control.gain",       "perturbation.kind", "perturbation.params", "perturbation.direction",
    "perturbation.file",
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string where(const std::string& key, std::size_t line) {
    return line == 0 ? "'" + key + "' (command line)" : "'" + key + "' at line " + std::to_string(line);
}

inline bool known_key(std::string_view key, std::span<const std::string_view> allowed = known_config_keys) {
    for (std::string_view k : allowed) {
        if (k == key) return true;
    }
    return false;
}

} // namespace detail

/// Parses section/key lines into a map; unknown keys, duplicates and malformed lines are config errors.
inline ConfigMap parse_config(std::istream& in, std::span<const std::string_view> allowed = known_config_keys) {
    ConfigMap out;
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw Error(ErrorKind::config, "malformed section header at line " + std::to_string(line_no));
            }
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::config, "expected 'key = value' at line " + std::to_string(line_no));
        }
        const std::string key = (section.empty() ? "" : section + ".") + std::string(detail::trim(line.substr(0, eq)));
        if (!detail::known_key(key, allowed)) {
            throw Error(ErrorKind::config, "unknown key " + detail::where(key, line_no));
        }
        if (out.count(key) != 0) throw Error(ErrorKind::config, "duplicate key " + detail::where(key, line_no));
        out[key] = {std::string(detail::trim(line.substr(eq + 1))), line_no};
    }
    return out;
}

inline ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Applies a "section.key=value" override.
inline void apply_override(ConfigMap& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::config, "override must be key=value: " + std::string(assignment));
    const std::string key(detail::trim(assignment.substr(0, eq)));
    if (!detail::known_key(key)) throw Error(ErrorKind::config, "unknown key " + detail::where(key, 0));
    cfg[key] = {std::string(detail::trim(assignment.substr(eq + 1))), 0};
}

inline double parse_real(const std::string& key, const ConfigEntry& e) {
    double v = 0.0;
    if (!parse_double(detail::trim(e.value), v)) {
        throw Error(ErrorKind::config, "expected a number for " + detail::where(key, e.line));
    }
    return v;
}

/// "a b; c d" -> 2x2. Entries separated by spaces or commas; every row must have the same width.
inline Mat parse_matrix(const std::string& key, const ConfigEntry& e) {
    std::vector<std::vector<double>> rows;
    std::string_view rest = e.value;
    while (true) {
        const auto semi = rest.find(';');
        std::string row_text(detail::trim(rest.substr(0, semi)));
        for (char& ch : row_text) {
            if (ch == ',') ch = ' ';
        }
        std::istringstream ss(row_text);
        std::vector<double> row;
        for (std::string tok; ss >> tok;) {
            double v = 0.0;
            if (!parse_double(tok, v)) {
                throw Error(ErrorKind::config, "bad matrix entry '" + tok + "' for " + detail::where(key, e.line));
            }
            row.push_back(v);
        }
        if (row.empty()) throw Error(ErrorKind::config, "empty matrix row for " + detail::where(key, e.line));
        rows.push_back(std::move(row));
        if (semi == std::string_view::npos) break;
        rest = rest.substr(semi + 1);
    }
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) {
            throw Error(ErrorKind::config, "ragged matrix rows for " + detail::where(key, e.line));
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

/// A vector written as one row ("1 2 3") or one column ("1; 2; 3").
inline Vec parse_vector(const std::string& key, const ConfigEntry& e) {
    const Mat m = parse_matrix(key, e);
    if (m.rows() != 1 && m.cols() != 1) throw Error(ErrorKind::config, "expected a vector for " + detail::where(key, e.line));
    return m.rows() == 1 ? Vec(m.row(0).transpose()) : Vec(m.col(0));
}

inline std::string format_matrix(const Mat& m) {
    std::string s;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i > 0) s += "; ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) s += ' ';
            s += format_double(m(i, j));
        }
    }
    return s;
}

inline std::string format_vector(const Vec& v) { return format_matrix(v.transpose()); }

inline constexpr std::string_view to_string(PerturbationKind k) {
    switch (k) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::decaying_sine: return "decaying-sine";
    case PerturbationKind::sine: return "sine";
    case PerturbationKind::scaled_sine: return "scaled-sine";
    case PerturbationKind::tabulated: return "tabulated";
    }
    return "?";
}

inline std::optional<PerturbationKind> parse_perturbation_kind(std::string_view s) {
    for (auto k : {PerturbationKind::none, PerturbationKind::decaying_sine, PerturbationKind::sine,
                   PerturbationKind::scaled_sine, PerturbationKind::tabulated}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

/// Tabulated perturbation CSV: header line, then rows "t,xi_1,...,xi_p" with increasing t.
inline Perturbation load_tabulated_perturbation(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot open perturbation file '" + path + "'");
    std::string line;
    std::getline(in, line);
    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) {
            double v = 0.0;
            if (!parse_double(detail::trim(tok), v)) {
                throw Error(ErrorKind::config, path + ": bad number at line " + std::to_string(line_no));
            }
            row.push_back(v);
        }
        if (row.size() < 2 || (!rows.empty() && row.size() != rows.front().size())) {
            throw Error(ErrorKind::config, path + ": wrong column count at line " + std::to_string(line_no));
        }
        times.push_back(row.front());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::config, path + ": no samples");
    Mat values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size() - 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 1; j < rows[i].size(); ++j) {
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = rows[i][j];
        }
    }
    try {
        return Perturbation::tabulated(std::move(times), std::move(values));
    } catch (const Error& e) {
        throw Error(ErrorKind::config, path + ": " + e.message());
    }
}

/// A fully resolved scenario plus the canonical text that reproduces it.
struct ResolvedScenario {
    ScenarioConfig scenario;
    ConfigMap canonical;
};

/**
 * Turns a parsed map into a scenario. The paper-2d preset supplies the
 * benchmark plant, alpha = 1, x0 = (-15, 20) and t_end = 150; explicit keys
 * override it.
 */
inline ResolvedScenario resolve_scenario(const ConfigMap& cfg) {
    const auto get = [&cfg](const char* key) -> const ConfigEntry* {
        const auto it = cfg.find(key);
        return it == cfg.end() ? nullptr : &it->second;
    };
    const auto require = [&](const char* key) -> const ConfigEntry& {
        const ConfigEntry* e = get(key);
        if (!e) throw Error(ErrorKind::config, std::string("missing required key '") + key + "'");
        return *e;
    };

    std::optional<Plant> preset_plant;
    std::optional<Vec> preset_x0;
    std::optional<double> preset_t_end;
    if (const ConfigEntry* p = get("plant.preset")) {
        if (p->value != "paper-2d") throw Error(ErrorKind::config, "unknown preset for " + detail::where("plant.preset", p->line));
        preset_plant = Benchmark2D::plant();
        preset_x0 = Benchmark2D::x0();
        preset_t_end = Benchmark2D::t_end;
    }

    const auto matrix_or = [&](const char* key, const Mat* fallback) -> Mat {
        if (const ConfigEntry* e = get(key)) return parse_matrix(key, *e);
        if (fallback) return *fallback;
        throw Error(ErrorKind::config, std::string("missing plant matrix '") + key + "' and no preset given");
    };
    const Mat a = matrix_or("plant.A", preset_plant ? &preset_plant->A() : nullptr);
    const Mat b = matrix_or("plant.B", preset_plant ? &preset_plant->B() : nullptr);
    const Mat c = matrix_or("plant.C", preset_plant ? &preset_plant->C() : nullptr);
    double alpha = preset_plant ? preset_plant->alpha() : 0.0;
    if (const ConfigEntry* e = get("plant.alpha")) alpha = parse_real("plant.alpha", *e);
    else if (!preset_plant) require("plant.alpha");

    std::optional<Plant> plant;
    try {
        plant.emplace(a, b, c, alpha);
    } catch (const Error& e) {
        throw Error(ErrorKind::config, std::string("invalid plant: ") + e.message());
    }

    const double h = parse_real("run.h", require("run.h"));
    if (!(h > 0.0)) throw Error(ErrorKind::config, "h must be positive");
    double t_end = preset_t_end.value_or(0.0);
    if (const ConfigEntry* e = get("run.t_end")) t_end = parse_real("run.t_end", *e);
    else if (!preset_t_end) require("run.t_end");
    Vec x0;
    if (const ConfigEntry* e = get("run.x0")) x0 = parse_vector("run.x0", *e);
    else if (preset_x0) x0 = *preset_x0;
    else require("run.x0");

    double cap = 1e9;
    if (const ConfigEntry* e = get("run.divergence_cap")) cap = parse_real("run.divergence_cap", *e);
    if (!(cap > 0.0)) throw Error(ErrorKind::config, "divergence_cap must be positive");

    EqLaw eq = EqLaw::exact;
    if (const ConfigEntry* e = get("control.eq_law")) {
        const auto law = parse_eq_law(e->value);
        if (!law || *law == EqLaw::continuous_reference) {
            throw Error(ErrorKind::config, "eq_law must be explicit, implicit, midpoint or exact: " + detail::where("control.eq_law", e->line));
        }
        eq = *law;
    }
    UsLaw us = UsLaw::implicit_avi();
    if (const ConfigEntry* e = get("control.us_law")) {
        const auto kind = parse_us_kind(e->value);
        if (!kind) throw Error(ErrorKind::config, "us_law must be explicit, implicit, saturation or off: " + detail::where("control.us_law", e->line));
        us.kind = *kind;
    }
    if (us.kind == UsKind::saturation) {
        us.epsilon = parse_real("control.epsilon", require("control.epsilon"));
        if (!(us.epsilon > 0.0)) throw Error(ErrorKind::config, "saturation epsilon must be positive");
    } else if (const ConfigEntry* e = get("control.epsilon")) {
        throw Error(ErrorKind::config, "epsilon is only used with us_law = saturation: " + detail::where("control.epsilon", e->line));
    }
    GainMatrix gain = GainMatrix::cb;
    if (const ConfigEntry* e = get("control.gain")) {
        const auto g = parse_gain_matrix(e->value);
        if (!g) throw Error(ErrorKind::config, "gain must be CB or CBstar: " + detail::where("control.gain", e->line));
        gain = *g;
    }

    Perturbation xi;
    PerturbationKind kind = PerturbationKind::none;
    if (const ConfigEntry* e = get("perturbation.kind")) {
        const auto k = parse_perturbation_kind(e->value);
        if (!k) throw Error(ErrorKind::config, "unknown perturbation kind: " + detail::where("perturbation.kind", e->line));
        kind = *k;
    }
    std::vector<double> params;
    if (kind == PerturbationKind::tabulated) {
        xi = load_tabulated_perturbation(require("perturbation.file").value);
    } else if (kind != PerturbationKind::none) {
        const Vec pv = parse_vector("perturbation.params", require("perturbation.params"));
        params.assign(pv.data(), pv.data() + pv.size());
        try {
            xi = Perturbation::from_params(kind, params);
        } catch (const Error& err) {
            throw Error(ErrorKind::config, std::string("perturbation.params: ") + err.message());
        }
    }
    if (const ConfigEntry* e = get("perturbation.direction")) {
        if (kind == PerturbationKind::none || kind == PerturbationKind::tabulated) {
            throw Error(ErrorKind::config, "direction applies to built-in waveforms only: " + detail::where("perturbation.direction", e->line));
        }
        const Vec d = parse_vector("perturbation.direction", *e);
        if (d.size() != plant->p()) throw Error(ErrorKind::config, "perturbation direction must have p entries");
        xi = xi.with_direction(d);
    }

    ResolvedScenario out{ScenarioConfig{.plant = *plant, .h = h, .t_end = t_end, .x0 = x0, .eq_law = eq, .us_law = us,
                                        .perturbation = xi, .gain = gain, .divergence_cap = cap},
                         {}};
    if (x0.size() != plant->n()) throw Error(ErrorKind::config, "x0 must have n entries");
    if (h > t_end) throw Error(ErrorKind::config, "h must not exceed t_end");

    ConfigMap& k = out.canonical;
    k["plant.A"] = {format_matrix(a)};
    k["plant.B"] = {format_matrix(b)};
    k["plant.C"] = {format_matrix(c)};
    k["plant.alpha"] = {format_double(alpha)};
    k["run.h"] = {format_double(h)};
    k["run.t_end"] = {format_double(t_end)};
    k["run.x0"] = {format_vector(x0)};
    k["run.divergence_cap"] = {format_double(cap)};
    k["control.eq_law"] = {std::string(to_string(eq))};
    k["control.us_law"] = {std::string(to_string(us.kind))};
    if (us.kind == UsKind::saturation) k["control.epsilon"] = {format_double(us.epsilon)};
    k["control.gain"] = {std::string(to_string(gain))};
    k["perturbation.kind"] = {std::string(to_string(kind))};
    if (kind == PerturbationKind::tabulated) k["perturbation.file"] = {get("perturbation.file")->value};
    if (!params.empty()) {
        k["perturbation.params"] = {format_vector(Eigen::Map<const Vec>(params.data(), static_cast<Eigen::Index>(params.size())))};
    }
    if (const ConfigEntry* e = get("perturbation.direction")) k["perturbation.direction"] = {format_vector(parse_vector("perturbation.direction", *e))};
    return out;
}

/// Writes a map back as sectioned text that parse_config reads to the same map values.
inline void write_config(std::ostream& os, const ConfigMap& cfg) {
    std::string section;
    bool first = true;
    for (const auto& [key, entry] : cfg) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (first || sec != section) {
            if (!first) os << '\n';
            os << '[' << sec << "]\n";
            section = sec;
            first = false;
        }
        os << key.substr(dot + 1) << " = " << entry.value << '\n';
    }
}

} // namespace smclab
