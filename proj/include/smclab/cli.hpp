#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "avi.hpp"
#include "config.hpp"
#include "controllers.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "metrics.hpp"
#include "sim.hpp"

/**
 * @file cli.hpp
 * @brief Command implementations behind the smclab executable.
 *
 * Every command computes first and writes its files afterwards. Data files
 * carry no timestamps; the manifest holds the only one.
 */

namespace smclab::cli {

inline constexpr std::string_view tool_version = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_assertion = 4 };

inline int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::config:
    case ErrorKind::dimension: return exit_config;
    default: return exit_numerical;
    }
}

/// Worker count for sweeps: SMCLAB_THREADS if set and positive, else the hardware concurrency.
inline unsigned sweep_threads() {
    if (const char* env = std::getenv("SMCLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Line-oriented "key = value" run record.
class Manifest {
public:
    explicit Manifest(std::string command) { add("command", std::move(command)); }

    void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }
    void add_output(const std::string& file) { add("output", file); }

    void write(const std::filesystem::path& path) const {
        std::ofstream os(path);
        os << "tool_version = " << tool_version << '\n';
        os << "timestamp = " << utc_timestamp() << '\n';
        for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Collects file contents in memory so nothing is written until every run has finished.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::ostream& open(const std::string& name) {
        files_.emplace_back(name, std::make_unique<std::ostringstream>());
        return *files_.back().second;
    }

    /// Writes every buffered file and records it in the manifest, then the manifest itself.
    void commit(Manifest& manifest) const {
        std::filesystem::create_directories(dir_);
        for (const auto& [name, buf] : files_) {
            std::ofstream os(dir_ / name, std::ios::binary);
            os << buf->str();
            if (!os) throw Error(ErrorKind::config, "cannot write " + (dir_ / name).string());
            manifest.add_output(name);
        }
        manifest.write(dir_ / "manifest.txt");
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

inline std::string status_text(const LabeledRun& r) {
    if (r.error) return "error: " + *r.error;
    return std::string(to_string(r.trace.status));
}

inline std::string optional_step(const std::optional<std::size_t>& k) { return k ? std::to_string(*k) : ""; }

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string config_file;
    std::string preset;
    std::vector<std::string> overrides;
    std::string out_dir = ".";
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
    ConfigMap cfg = args.config_file.empty() ? ConfigMap{} : parse_config_file(args.config_file);
    if (!args.preset.empty()) apply_override(cfg, "plant.preset=" + args.preset);
    for (const auto& o : args.overrides) apply_override(cfg, o);
    const ResolvedScenario rs = resolve_scenario(cfg);
    const Trace tr = run(rs.scenario);

    OutputSet files(args.out_dir);
    write_trace_csv(files.open("trace.csv"), tr);
    write_config(files.open("resolved.cfg"), rs.canonical);
    Manifest m("simulate");
    for (const auto& [k, e] : rs.canonical) m.add("config." + k, e.value);
    m.add("status", std::string(to_string(tr.status)));
    m.add("steps", std::to_string(tr.steps()));
    m.add("reaching_step", optional_step(tr.reaching_step));
    files.commit(m);

    out << "status " << to_string(tr.status) << ", " << tr.steps() << " steps";
    if (tr.reaching_step) out << ", sliding from step " << *tr.reaching_step;
    out << ", final sigma " << format_vector(tr.sigma.back()) << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------- order-check

struct OrderCheckArgs {
    std::string law = "explicit";
    std::string gain = "CB";
    double h_min = 1e-4;
    double h_max = 1e-2;
    std::size_t points = 12;
    std::string x0;
    bool assert_band = false;
    std::string out_dir = ".";
};

/// Declared slope band per law; nullopt for the exact law, which must sit at the floor.
inline std::optional<std::pair<double, double>> order_band(EqLaw law) {
    switch (law) {
    case EqLaw::explicit_:
    case EqLaw::implicit: return std::pair{1.85, 2.15};
    case EqLaw::midpoint: return std::pair{2.85, 3.15};
    default: return std::nullopt;
    }
}

inline int cmd_order_check(const OrderCheckArgs& args, std::ostream& out) {
    const auto law = parse_eq_law(args.law);
    if (!law || *law == EqLaw::continuous_reference) throw Error(ErrorKind::config, "unknown law '" + args.law + "'");
    const auto gain = parse_gain_matrix(args.gain);
    if (!gain) throw Error(ErrorKind::config, "gain must be CB or CBstar");
    if (args.points < 4) throw Error(ErrorKind::config, "order check needs at least 4 points");
    if (!(args.h_min > 0.0) || !(args.h_max > args.h_min)) throw Error(ErrorKind::config, "need 0 < h-min < h-max");
    const Plant plant = Benchmark2D::plant();
    Vec x = Benchmark2D::x0();
    if (!args.x0.empty()) {
        x = parse_vector("x0", {args.x0, 0});
        if (x.size() != plant.n()) throw Error(ErrorKind::config, "x0 must have 2 entries");
    }

    const std::vector<double> hs = log_space_descending(args.h_max, args.h_min, args.points);
    std::vector<double> errors;
    std::vector<double> floors;
    for (double h : hs) {
        const SampledPlant sp = sample(plant, h);
        errors.push_back(one_step_sigma_error(sp, *law, x, *gain));
        floors.push_back(one_step_measurement_floor(sp, *law, x, *gain));
    }
    OutputSet files(args.out_dir);
    std::ostream& csv = files.open("order_" + args.law + ".csv");
    csv << "h,error,floor,above_floor\n";
    std::size_t usable = 0;
    std::vector<double> masked = errors;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        const bool above = errors[i] > floors[i];
        usable += above ? 1 : 0;
        if (!above) masked[i] = 0.0;
        csv << format_double(hs[i]) << ',' << format_double(errors[i]) << ',' << format_double(floors[i]) << ','
            << (above ? 1 : 0) << '\n';
    }
    Manifest m("order-check");
    m.add("config.law", args.law);
    m.add("config.gain", args.gain);
    m.add("config.h_min", format_double(args.h_min));
    m.add("config.h_max", format_double(args.h_max));
    m.add("config.points", std::to_string(args.points));
    m.add("config.x0", format_vector(x));

    int code = exit_ok;
    const auto band = order_band(*law);
    if (usable == 0) {
        out << "law " << args.law << ": below measurement floor (" << hs.size() << " of " << hs.size() << " points)\n";
        m.add("result", "below measurement floor");
        if (args.assert_band && band) code = exit_assertion;
    } else {
        OrderFit fit;
        try {
            fit = fit_order(hs, masked);
        } catch (const Error& e) {
            m.add("result", std::string("fit failed: ") + e.message());
            files.commit(m);
            throw;
        }
        out << "law " << args.law << ": slope " << format_double(fit.slope) << ", intercept "
            << format_double(fit.intercept) << ", r^2 " << format_double(fit.r_squared) << ", points "
            << fit.hs.size() << '\n';
        m.add("slope", format_double(fit.slope));
        m.add("r_squared", format_double(fit.r_squared));
        if (args.assert_band) {
            const bool inside = band ? (fit.slope >= band->first && fit.slope <= band->second) : false;
            if (!inside) {
                out << "assertion failed: slope outside "
                    << (band ? "[" + format_double(band->first) + ", " + format_double(band->second) + "]"
                             : std::string("the measurement floor"))
                    << '\n';
                code = exit_assertion;
            }
        }
    }
    if (band) m.add("band", format_double(band->first) + " " + format_double(band->second));
    m.add("status", code == exit_ok ? "ok" : "assertion failed");
    files.commit(m);
    return code;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
    std::string kind;
    double h = 0.0; // 0: per-kind default
    bool perturbed = false;
    std::string alphas = "1,3,10";
    std::string grid = "20x20";
    double h_lo = 1e-3;
    double h_hi = 0.3;
    double eps_lo = 1e-4;
    double eps_hi = 1.0;
    double t_end = Benchmark2D::t_end;
    double window = 20.0;
    std::string out_dir = ".";
};

inline std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) {
        double v = 0.0;
        if (!parse_double(detail::trim(tok), v)) throw Error(ErrorKind::config, std::string("bad number in ") + what + ": '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorKind::config, std::string(what) + " is empty");
    return out;
}

/// "NxM": N timesteps by M saturation widths.
inline std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const auto x = text.find('x');
    const auto num = [&](std::string_view s) -> std::size_t {
        double v = 0.0;
        if (!parse_double(s, v) || v < 1.0 || v != std::floor(v)) throw Error(ErrorKind::config, "grid must look like 20x20");
        return static_cast<std::size_t>(v);
    };
    if (x == std::string::npos) throw Error(ErrorKind::config, "grid must look like 20x20");
    return {num(std::string_view(text).substr(0, x)), num(std::string_view(text).substr(x + 1))};
}

inline int emit_runs(const std::vector<LabeledRun>& runs, const std::string& prefix, OutputSet& files, Manifest& m,
                     std::ostream& out) {
    int code = exit_ok;
    std::ostream& summary = files.open(prefix + "summary.csv");
    summary << "label,eq_law,us_law,alpha,status,steps,reaching_step,final_sigma_norm\n";
    for (const LabeledRun& r : runs) {
        const std::string status = status_text(r);
        m.add("run." + r.label + ".status", status);
        out << r.label << ": " << status << '\n';
        summary << r.label << ',' << to_string(r.config.eq_law) << ',' << to_string(r.config.us_law.kind) << ','
                << format_double(r.config.plant.alpha()) << ',';
        if (r.error) {
            summary << "error,,,\n";
            code = exit_numerical;
            continue;
        }
        summary << to_string(r.trace.status) << ',' << r.trace.steps() << ',' << optional_step(r.trace.reaching_step)
                << ',' << format_double(r.trace.sigma.back().norm()) << '\n';
        write_trace_csv(files.open(prefix + r.label + ".csv"), r.trace);
    }
    return code;
}

inline int cmd_sweep(const SweepArgs& args, std::ostream& out) {
    const unsigned threads = sweep_threads();
    OutputSet files(args.out_dir);
    Manifest m("sweep " + args.kind);
    m.add("config.t_end", format_double(args.t_end));
    if (args.kind == "fig-matrix") {
        const double h = args.h > 0.0 ? args.h : 0.3;
        m.add("config.h", format_double(h));
        m.add("config.perturbed", args.perturbed ? "true" : "false");
        const auto runs = run_fig_matrix(h, args.perturbed, threads, args.t_end);
        const int code = emit_runs(runs, "fig_", files, m, out);
        files.commit(m);
        return code;
    }
    if (args.kind == "gain-study") {
        const double h = args.h > 0.0 ? args.h : 0.1;
        const std::vector<double> alphas = parse_list(args.alphas, "alphas");
        for (double a : alphas) {
            if (!(a > 0.0)) throw Error(ErrorKind::config, "alphas must be positive");
        }
        m.add("config.h", format_double(h));
        m.add("config.alphas", args.alphas);
        const auto runs = run_gain_study(h, alphas, threads, args.t_end);
        const int code = emit_runs(runs, "gain_", files, m, out);
        files.commit(m);
        return code;
    }
    if (args.kind == "saturation") {
        const auto [nh, ne] = parse_grid(args.grid);
        const std::vector<double> hs = linear_grid(args.h_lo, args.h_hi, nh);
        const std::vector<double> eps = log_grid(args.eps_lo, args.eps_hi, ne);
        for (const auto& [k, v] : {std::pair{"h_min", args.h_lo}, {"h_max", args.h_hi}, {"eps_min", args.eps_lo},
                                   {"eps_max", args.eps_hi}, {"window", args.window}}) {
            m.add(std::string("config.") + k, format_double(v));
        }
        m.add("config.grid", args.grid);
        const SweepResult res = run_saturation_sweep(hs, eps, {.t_end = args.t_end, .window = args.window, .threads = threads});
        std::ostream& c1 = files.open("saturation_c1.csv");
        std::ostream& c2 = files.open("saturation_c2.csv");
        c1 << "epsilon,h,c1,diff_c1\n";
        c2 << "epsilon,h,c2,diff_c2\n";
        for (std::size_t e = 0; e < eps.size(); ++e) {
            for (std::size_t j = 0; j < hs.size(); ++j) {
                const auto ei = static_cast<Eigen::Index>(e);
                const auto ji = static_cast<Eigen::Index>(j);
                c1 << format_double(eps[e]) << ',' << format_double(hs[j]) << ',' << format_double(res.c1(ei, ji)) << ','
                   << format_double(res.diff_c1(ei, ji)) << '\n';
                c2 << format_double(eps[e]) << ',' << format_double(hs[j]) << ',' << format_double(res.c2(ei, ji)) << ','
                   << format_double(res.diff_c2(ei, ji)) << '\n';
            }
        }
        std::ostream& base = files.open("saturation_baseline.csv");
        base << "h,implicit_c1,implicit_c2,best_epsilon\n";
        for (std::size_t j = 0; j < hs.size(); ++j) {
            base << format_double(hs[j]) << ',' << format_double(res.implicit_baseline_c1[j]) << ','
                 << format_double(res.implicit_baseline_c2[j]) << ',' << format_double(res.best_epsilon_per_h[j]) << '\n';
        }
        m.add("cells", std::to_string(nh * ne));
        m.add("failed_cells", std::to_string(res.failures.size()));
        for (const auto& f : res.failures) m.add("failure", f);
        m.add("status", res.failures.empty() ? "ok" : "partial");
        files.commit(m);
        out << nh * ne << " cells, " << res.failures.size() << " failed\n";
        return exit_ok;
    }
    throw Error(ErrorKind::config, "unknown sweep kind '" + args.kind + "' (fig-matrix, gain-study, saturation)");
}

// ---------------------------------------------------------------- avi-solve

inline constexpr std::string_view avi_problem_keys[] = {"M", "q", "alpha"};

inline int cmd_avi_solve(const std::string& problem_file, std::ostream& out) {
    std::ifstream in(problem_file);
    if (!in) throw Error(ErrorKind::config, "cannot open problem file '" + problem_file + "'");
    const ConfigMap kv = parse_config(in, avi_problem_keys);
    for (const char* key : {"M", "q", "alpha"}) {
        if (kv.count(key) == 0) throw Error(ErrorKind::config, std::string("missing key '") + key + "'");
    }
    const BoxAVI avi{parse_matrix("M", kv.at("M")), parse_vector("q", kv.at("q")), parse_real("alpha", kv.at("alpha"))};
    if (avi.M.rows() != avi.M.cols() || avi.q.size() != avi.M.rows()) {
        throw Error(ErrorKind::config, "M must be p x p and q must have p entries");
    }
    const AVISolution sol = solve_box_avi(avi);
    out << "z = " << format_vector(sol.z) << '\n';
    out << "sigma_tilde = " << format_vector(sol.sigma_tilde) << '\n';
    out << "residual = " << format_double(sol.residual) << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------- entry point

/// Parses argv and dispatches; every library error is mapped to an exit code with a one-line diagnostic.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete-time sliding-mode control laboratory", "smclab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));
    // "-h" stays free so the sweep subcommand can take "--h".
    app.set_help_flag("--help", "print this help message and exit");

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "run one closed-loop scenario and write its trace");
    s->add_option("-c,--config", sim.config_file, "scenario file");
    s->add_option("--preset", sim.preset, "plant preset (paper-2d)");
    s->add_option("--set", sim.overrides, "override section.key=value")->allow_extra_args(false);
    s->add_option("-o,--out", sim.out_dir, "output directory");

    OrderCheckArgs oc;
    auto* o = app.add_subcommand("order-check", "fit the one-step error order of an equivalent law");
    o->add_option("--law", oc.law, "explicit | implicit | midpoint | exact");
    o->add_option("--gain", oc.gain, "CB | CBstar");
    o->add_option("--h-min", oc.h_min);
    o->add_option("--h-max", oc.h_max);
    o->add_option("--points", oc.points);
    o->add_option("--x0", oc.x0, "state, e.g. \"-15 20\"");
    o->add_flag("--assert", oc.assert_band, "exit 4 when the slope leaves the declared band");
    o->add_option("-o,--out", oc.out_dir);

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep", "canned studies: fig-matrix, gain-study, saturation");
    w->add_option("kind", sw.kind)->required();
    w->add_option("--h", sw.h, "timestep (fig-matrix, gain-study)");
    w->add_flag("--perturbed", sw.perturbed, "fig-matrix with the decaying sine perturbation");
    w->add_option("--alphas", sw.alphas, "comma-separated gains (gain-study)");
    w->add_option("--grid", sw.grid, "NxM timesteps by epsilons (saturation)");
    w->add_option("--h-min", sw.h_lo);
    w->add_option("--h-max", sw.h_hi);
    w->add_option("--eps-min", sw.eps_lo);
    w->add_option("--eps-max", sw.eps_hi);
    w->add_option("--t-end", sw.t_end);
    w->add_option("--window", sw.window, "index window in seconds (saturation)");
    w->add_option("-o,--out", sw.out_dir);

    std::string problem;
    auto* a = app.add_subcommand("avi-solve", "solve one box AVI from a problem file (keys M, q, alpha)");
    a->add_option("problem", problem)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o1, o2;
        const int rc = app.exit(e, o1, o2);
        out << o1.str();
        err << o2.str();
        return rc == 0 ? exit_ok : exit_config;
    }

    try {
        if (*s) return cmd_simulate(sim, out);
        if (*o) return cmd_order_check(oc, out);
        if (*w) return cmd_sweep(sw, out);
        if (*a) return cmd_avi_solve(problem, out);
    } catch (const Error& e) {
        err << "smclab: " << to_string(e.kind()) << " error: " << e.message() << '\n';
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "smclab: " << e.what() << '\n';
        return exit_config;
    }
    return exit_config;
}

} // namespace smclab::cli
