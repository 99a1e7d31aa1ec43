#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "controllers.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "linops.hpp"
#include "metrics.hpp"
#include "sim.hpp"

namespace smclab {

/// The unstable 2-D benchmark: A = [0 1; 19 -2], B = (0, 1)^T, C = (1, 1), x0 = (-15, 20)^T.
struct Benchmark2D {
    static Plant plant(double alpha = 1.0) {
        Mat a(2, 2);
        a << 0.0, 1.0, 19.0, -2.0;
        Mat b(2, 1);
        b << 0.0, 1.0;
        Mat c(1, 2);
        c << 1.0, 1.0;
        return Plant(a, b, c, alpha);
    }

    static Vec x0() {
        Vec x(2);
        x << -15.0, 20.0;
        return x;
    }

    static constexpr double t_end = 150.0;
};

/// xi(t) = 0.6 e^{min(6 - t, 0)} sin(2 pi t).
inline Perturbation fig_matrix_perturbation() { return Perturbation::decaying_sine(0.6, 6.0, 2.0 * std::numbers::pi); }

/// xi(t) = 0.9 sin(t).
inline Perturbation gain_study_perturbation() { return Perturbation::sine(0.9, 1.0); }

/// xi(t) = sin(4 pi t).
inline Perturbation saturation_sweep_perturbation() { return Perturbation::sine(1.0, 4.0 * std::numbers::pi); }

struct LabeledRun {
    std::string label;
    ScenarioConfig config;
    Trace trace;
    std::optional<std::string> error; // set when the run threw; trace is then empty
};

/**
 * Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
 * handled exactly once; results must be written to slots addressed by i.
 */
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

namespace detail {

inline void execute(std::vector<LabeledRun>& runs, unsigned threads) {
    parallel_for(runs.size(), threads, [&runs](std::size_t i) {
        try {
            runs[i].trace = run(runs[i].config);
        } catch (const Error& e) {
            runs[i].error = e.what();
        }
    });
}

} // namespace detail

/**
 * The seven eq-law/u_s pairings of the benchmark study. First letter is the
 * equivalent law (e explicit, i implicit, m midpoint), second the u_s law
 * (i implicit, e explicit); "ex" is the exact law with implicit u_s.
 */
inline std::vector<LabeledRun> run_fig_matrix(double h, bool perturbed, unsigned threads = 1,
                                              double t_end = Benchmark2D::t_end) {
    struct Pair {
        const char* label;
        EqLaw eq;
        UsLaw us;
    };
    const Pair pairs[] = {
        {"ei", EqLaw::explicit_, UsLaw::implicit_avi()}, {"ii", EqLaw::implicit, UsLaw::implicit_avi()},
        {"mi", EqLaw::midpoint, UsLaw::implicit_avi()},  {"ex", EqLaw::exact, UsLaw::implicit_avi()},
        {"ee", EqLaw::explicit_, UsLaw::explicit_sign()}, {"ie", EqLaw::implicit, UsLaw::explicit_sign()},
        {"me", EqLaw::midpoint, UsLaw::explicit_sign()},
    };
    const Plant plant = Benchmark2D::plant();
    const Perturbation xi = perturbed ? fig_matrix_perturbation() : Perturbation::none();
    std::vector<LabeledRun> runs;
    for (const Pair& pr : pairs) {
        runs.push_back({pr.label,
                        ScenarioConfig{.plant = plant, .h = h, .t_end = t_end, .x0 = Benchmark2D::x0(), .eq_law = pr.eq,
                                       .us_law = pr.us, .perturbation = xi},
                        Trace{}, std::nullopt});
    }
    detail::execute(runs, threads);
    return runs;
}

/// Label of a gain-study run, e.g. "implicit-a3".
inline std::string gain_label(UsKind kind, double alpha) {
    return std::string(to_string(kind)) + "-a" + format_double(alpha);
}

/**
 * Exact equivalent law with implicit and with explicit u_s for each alpha,
 * under xi = 0.9 sin t. Runs are ordered implicit first, then explicit, each
 * in the order of `alphas`.
 */
inline std::vector<LabeledRun> run_gain_study(double h = 0.1, const std::vector<double>& alphas = {1.0, 3.0, 10.0},
                                              unsigned threads = 1, double t_end = Benchmark2D::t_end) {
    if (alphas.empty()) throw Error(ErrorKind::config, "gain study needs at least one alpha");
    std::vector<LabeledRun> runs;
    for (UsLaw us : {UsLaw::implicit_avi(), UsLaw::explicit_sign()}) {
        for (double alpha : alphas) {
            runs.push_back({gain_label(us.kind, alpha),
                            ScenarioConfig{.plant = Benchmark2D::plant(alpha), .h = h, .t_end = t_end,
                                           .x0 = Benchmark2D::x0(), .eq_law = EqLaw::exact, .us_law = us,
                                           .perturbation = gain_study_perturbation()},
                            Trace{}, std::nullopt});
        }
    }
    detail::execute(runs, threads);
    return runs;
}

/// Value stored in C1/C2 cells whose run diverged or failed.
inline constexpr double sweep_sentinel = -1.0;

struct SweepResult {
    std::vector<double> hs;
    std::vector<double> epsilons;
    Mat c1; // rows: epsilon, cols: h
    Mat c2;
    std::vector<double> implicit_baseline_c1; // per h
    std::vector<double> implicit_baseline_c2;
    Mat diff_c1; // saturated minus implicit; nan where either run failed
    Mat diff_c2;
    std::vector<double> best_epsilon_per_h; // argmin C1 over epsilon, ties to the smaller epsilon; nan if none
    std::vector<std::string> failures;      // "eps_index,h_index: message"
};

struct SweepOptions {
    double t_end = Benchmark2D::t_end;
    double window = 20.0;
    unsigned threads = 1;
};

/// count values evenly spaced on [lo, hi], both ends included.
inline std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
    if (count == 0) throw Error(ErrorKind::config, "grid needs at least one point");
    if (count == 1) return {lo};
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    out.back() = hi;
    return out;
}

/// count values evenly spaced in log on [lo, hi], ascending.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo)) throw Error(ErrorKind::config, "log grid needs 0 < lo <= hi");
    std::vector<double> out = linear_grid(std::log(lo), std::log(hi), count);
    for (double& v : out) v = std::exp(v);
    out.front() = lo;
    if (count > 1) out.back() = hi;
    return out;
}

inline std::vector<double> default_sweep_hs(std::size_t count) { return linear_grid(1e-3, 0.3, count); }
inline std::vector<double> default_sweep_epsilons(std::size_t count) { return log_grid(1e-4, 1.0, count); }

/**
 * Saturated explicit u_s = -alpha sat_eps(sigma) with the exact equivalent law
 * on the benchmark (alpha = 1, xi = sin 4 pi t), one run per (eps, h) cell,
 * plus an implicit-u_s baseline per h. C1 and C2 are taken over the final
 * `window` seconds.
 */
inline SweepResult run_saturation_sweep(const std::vector<double>& hs, const std::vector<double>& epsilons,
                                        const SweepOptions& opt = {}) {
    if (hs.empty() || epsilons.empty()) throw Error(ErrorKind::config, "sweep grids must be nonempty");
    for (double h : hs) {
        if (!(h > 0.0)) throw Error(ErrorKind::config, "h must be positive");
        if (h > opt.window) throw Error(ErrorKind::config, "h must not exceed the index window");
    }
    for (double e : epsilons) {
        if (!(e > 0.0)) throw Error(ErrorKind::config, "saturation epsilon must be positive");
    }
    const Plant plant = Benchmark2D::plant(1.0);
    const auto ne = static_cast<Eigen::Index>(epsilons.size());
    const auto nh = static_cast<Eigen::Index>(hs.size());

    std::vector<std::optional<SampledPlant>> sampled(hs.size());
    parallel_for(hs.size(), opt.threads, [&](std::size_t j) { sampled[j].emplace(plant, hs[j]); });

    SweepResult res;
    res.hs = hs;
    res.epsilons = epsilons;
    res.c1 = Mat::Constant(ne, nh, sweep_sentinel);
    res.c2 = Mat::Constant(ne, nh, sweep_sentinel);
    res.implicit_baseline_c1.assign(hs.size(), sweep_sentinel);
    res.implicit_baseline_c2.assign(hs.size(), sweep_sentinel);
    std::vector<std::string> messages((epsilons.size() + 1) * hs.size());

    // Cell index c < ne * nh is (eps = c / nh, h = c % nh); the last nh cells are the baselines.
    const std::size_t cells = (epsilons.size() + 1) * hs.size();
    parallel_for(cells, opt.threads, [&](std::size_t c) {
        const std::size_t e = c / hs.size();
        const std::size_t j = c % hs.size();
        const bool baseline = e == epsilons.size();
        const ScenarioConfig cfg{.plant = plant, .h = hs[j], .t_end = opt.t_end, .x0 = Benchmark2D::x0(),
                                 .eq_law = EqLaw::exact,
                                 .us_law = baseline ? UsLaw::implicit_avi() : UsLaw::saturation(epsilons[e]),
                                 .perturbation = saturation_sweep_perturbation()};
        try {
            const Trace tr = run(cfg, *sampled[j]);
            if (tr.status != RunStatus::ok) {
                messages[c] = "diverged";
                return;
            }
            const ChatterIndices ci = chatter_indices(tr, opt.window);
            if (baseline) {
                res.implicit_baseline_c1[j] = ci.c1;
                res.implicit_baseline_c2[j] = ci.c2;
            } else {
                res.c1(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) = ci.c1;
                res.c2(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) = ci.c2;
            }
        } catch (const Error& err) {
            messages[c] = err.what();
        }
    });

    for (std::size_t c = 0; c < cells; ++c) {
        if (messages[c].empty()) continue;
        const std::size_t e = c / hs.size();
        const std::size_t j = c % hs.size();
        res.failures.push_back((e == epsilons.size() ? std::string("baseline") : std::to_string(e)) + "," +
                               std::to_string(j) + ": " + messages[c]);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.diff_c1 = Mat::Constant(ne, nh, nan);
    res.diff_c2 = Mat::Constant(ne, nh, nan);
    res.best_epsilon_per_h.assign(hs.size(), nan);
    for (Eigen::Index j = 0; j < nh; ++j) {
        const auto js = static_cast<std::size_t>(j);
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index e = 0; e < ne; ++e) {
            const double v1 = res.c1(e, j);
            if (v1 == sweep_sentinel) continue;
            if (res.implicit_baseline_c1[js] != sweep_sentinel) {
                res.diff_c1(e, j) = v1 - res.implicit_baseline_c1[js];
                res.diff_c2(e, j) = res.c2(e, j) - res.implicit_baseline_c2[js];
            }
            const double eps = epsilons[static_cast<std::size_t>(e)];
            if (v1 < best || (v1 == best && eps < res.best_epsilon_per_h[js])) {
                best = v1;
                res.best_epsilon_per_h[js] = eps;
            }
        }
    }
    return res;
}

} // namespace smclab
