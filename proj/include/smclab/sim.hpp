#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "controllers.hpp"
#include "csv.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "linops.hpp"

namespace smclab {

struct ScenarioConfig {
    Plant plant;
    double h = 0.0;
    double t_end = 0.0;
    Vec x0;
    EqLaw eq_law = EqLaw::exact;
    UsLaw us_law = UsLaw::implicit_avi();
    Perturbation perturbation{};
    GainMatrix gain = GainMatrix::cb;
    std::uint64_t seed = 0; // reserved
    /// A run halts with status diverged once ||x||_inf exceeds this.
    double divergence_cap = 1e9;
};

enum class RunStatus { ok, diverged };

inline constexpr std::string_view to_string(RunStatus s) { return s == RunStatus::ok ? "ok" : "diverged"; }

/**
 * Per-step record of a closed-loop run.
 *
 * times/states/sigma have one entry per grid point t_0..t_N; the per-step
 * controls, p_k and sliding flags have one entry per interval (N). sigma_tilde
 * is filled only by implicit u_s runs. A diverged run stops early but keeps
 * these length relations.
 */
struct Trace {
    double h = 0.0;
    double alpha = 0.0;
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> sigma;
    std::vector<Vec> u_eq;
    std::vector<Vec> u_s;
    std::vector<Vec> sigma_tilde;
    std::vector<Vec> p_k;
    std::vector<bool> sliding_flags;
    std::optional<std::size_t> reaching_step;
    RunStatus status = RunStatus::ok;

    std::size_t steps() const noexcept { return u_s.size(); }
    double t_end() const { return times.empty() ? 0.0 : times.back(); }
};

/// Smallest k such that every flag from k on is set.
inline std::optional<std::size_t> detect_sliding_phase(const std::vector<bool>& flags) {
    std::size_t k = flags.size();
    while (k > 0 && flags[k - 1]) --k;
    if (k == flags.size()) return std::nullopt;
    return k;
}

inline std::optional<std::size_t> detect_sliding_phase(const Trace& trace) {
    return detect_sliding_phase(trace.sliding_flags);
}

/// "sigma = 0" threshold: 1e-12 max(1, ||sigma_0||).
inline double sigma_zero_threshold(const Trace& trace) {
    const double s0 = trace.sigma.empty() ? 0.0 : trace.sigma.front().norm();
    return 1e-12 * std::max(1.0, s0);
}

inline std::size_t step_count(double h, double t_end) {
    return static_cast<std::size_t>(std::floor(t_end / h + 1e-9));
}

namespace detail {

inline void validate(const ScenarioConfig& cfg) {
    if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) throw Error(ErrorKind::config, "h must be positive");
    if (!(cfg.t_end > 0.0) || !std::isfinite(cfg.t_end)) throw Error(ErrorKind::config, "t_end must be positive");
    if (cfg.h > cfg.t_end) throw Error(ErrorKind::config, "h must not exceed t_end");
    if (cfg.x0.size() != cfg.plant.n()) throw Error(ErrorKind::config, "x0 must have n entries");
    if (!cfg.x0.allFinite()) throw Error(ErrorKind::config, "x0 must be finite");
    if (cfg.us_law.kind == UsKind::saturation && !(cfg.us_law.epsilon > 0.0)) {
        throw Error(ErrorKind::config, "saturation epsilon must be positive");
    }
    if (cfg.eq_law == EqLaw::continuous_reference) {
        throw Error(ErrorKind::config, "continuous-reference is produced by continuous_reference(), not run()");
    }
}

} // namespace detail

/**
 * Fixed-step closed loop
 *   x_{k+1} = e^{Ah} x_k + B* (u_eq_k + u_s_k) + p_k.
 *
 * Uses the supplied sampled plant, which must match cfg.plant and cfg.h.
 */
inline Trace run(const ScenarioConfig& cfg, const SampledPlant& sp) {
    detail::validate(cfg);
    if (cfg.us_law.kind == UsKind::implicit_avi && !sp.cb_star_is_p()) {
        throw Error(ErrorKind::not_p_matrix, "implicit u_s needs CB* to be a P-matrix");
    }
    const std::size_t n_steps = step_count(cfg.h, cfg.t_end);
    const Mat& c = cfg.plant.C();
    const double alpha = cfg.plant.alpha();

    Trace tr;
    tr.h = cfg.h;
    tr.alpha = alpha;
    tr.times.reserve(n_steps + 1);
    tr.states.reserve(n_steps + 1);
    tr.sigma.reserve(n_steps + 1);
    tr.times.push_back(0.0);
    tr.states.push_back(cfg.x0);
    tr.sigma.push_back(c * cfg.x0);

    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t_k = static_cast<double>(k) * cfg.h;
        const Vec& x = tr.states.back();
        ControlStep step;
        Vec pk;
        try {
            step = control_step(sp, cfg.eq_law, cfg.us_law, x, cfg.gain);
            pk = perturbation_integral(sp, cfg.perturbation, t_k);
        } catch (const Error& e) {
            throw StepError(e.kind(), k, e.message());
        }
        Vec next = sp.e_Ah() * x + sp.b_star() * (step.u_eq + step.u_s) + pk;

        tr.u_eq.push_back(std::move(step.u_eq));
        tr.u_s.push_back(std::move(step.u_s));
        if (step.sigma_tilde_next) tr.sigma_tilde.push_back(std::move(*step.sigma_tilde_next));
        tr.p_k.push_back(std::move(pk));
        tr.sliding_flags.push_back(step.in_sliding_phase);

        const bool diverged = !next.allFinite() || next.cwiseAbs().maxCoeff() > cfg.divergence_cap;
        tr.times.push_back(static_cast<double>(k + 1) * cfg.h);
        tr.sigma.push_back(c * next);
        tr.states.push_back(std::move(next));
        if (diverged) {
            tr.status = RunStatus::diverged;
            break;
        }
    }
    tr.reaching_step = detect_sliding_phase(tr);
    return tr;
}

inline Trace run(const ScenarioConfig& cfg) {
    detail::validate(cfg);
    const SampledPlant sp = sample(cfg.plant, cfg.h);
    return run(cfg, sp);
}

/**
 * Idealized continuous-time sliding-phase control u_s(t) = -xi(t) sampled on
 * the grid of spacing h / refine. Only times and u_s are filled; u_s has one
 * entry per grid point.
 */
inline Trace continuous_reference(const ScenarioConfig& cfg, std::size_t refine) {
    if (refine == 0) throw Error(ErrorKind::domain, "refine must be positive");
    if (!(cfg.h > 0.0) || !(cfg.t_end > 0.0)) throw Error(ErrorKind::config, "h and t_end must be positive");
    const double fine = cfg.h / static_cast<double>(refine);
    const std::size_t points = step_count(cfg.h, cfg.t_end) * refine;
    const Eigen::Index p = cfg.plant.p();
    Trace tr;
    tr.h = fine;
    tr.alpha = cfg.plant.alpha();
    tr.times.reserve(points + 1);
    tr.u_s.reserve(points + 1);
    for (std::size_t j = 0; j <= points; ++j) {
        const double t = static_cast<double>(j) * fine;
        tr.times.push_back(t);
        tr.u_s.push_back(-cfg.perturbation(t, p));
    }
    return tr;
}

/// Trace as CSV: k, t, x_*, sigma_*, ueq_*, us_*, sigma_tilde_*, sliding_flag.
inline void write_trace_csv(std::ostream& os, const Trace& tr) {
    const Eigen::Index n = tr.states.empty() ? 0 : tr.states.front().size();
    const Eigen::Index p = tr.sigma.empty() ? 0 : tr.sigma.front().size();
    os << "k,t";
    for (Eigen::Index i = 1; i <= n; ++i) os << ",x_" << i;
    for (const char* col : {"sigma", "ueq", "us", "sigma_tilde"}) {
        for (Eigen::Index i = 1; i <= p; ++i) os << ',' << col << '_' << i;
    }
    os << ",sliding_flag\n";
    const auto put = [&os](const std::vector<Vec>& list, std::size_t k, Eigen::Index width) {
        for (Eigen::Index i = 0; i < width; ++i) {
            os << ',';
            if (k < list.size()) os << format_double(list[k](i));
        }
    };
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
        os << k << ',' << format_double(tr.times[k]);
        put(tr.states, k, n);
        put(tr.sigma, k, p);
        put(tr.u_eq, k, p);
        put(tr.u_s, k, p);
        put(tr.sigma_tilde, k, p);
        os << ',';
        if (k < tr.sliding_flags.size()) os << (tr.sliding_flags[k] ? '1' : '0');
        os << '\n';
    }
}

/// Sliding-variable recursion sigma_{k+1} = sigma_k + M u_k, u_k in -alpha Sgn(sigma_{k+1}).
struct SlidingRecursion {
    std::vector<Vec> sigma;
    std::vector<Vec> u_s;
};

inline SlidingRecursion run_sliding_recursion(const Mat& m, const Vec& sigma0, double alpha, std::size_t steps) {
    if (!is_p_matrix(m)) throw Error(ErrorKind::not_p_matrix, "recursion matrix must be a P-matrix");
    SlidingRecursion rec;
    rec.sigma.push_back(sigma0);
    for (std::size_t k = 0; k < steps; ++k) {
        const BoxAVI avi{m, rec.sigma.back(), alpha};
        AVISolution sol = solve_box_avi(avi, PMatrixCheck::assume_certified);
        rec.u_s.push_back(sol.z);
        rec.sigma.push_back(std::move(sol.sigma_tilde));
    }
    return rec;
}

/// V(sigma_0) = -(u_{-1})^T sigma_0 with u_{-1} = -alpha sgn(sigma_0), i.e. alpha ||sigma_0||_1.
inline double sign_lyapunov_initial(const Vec& sigma0, double alpha) { return alpha * sigma0.lpNorm<1>(); }

/// k_0 = ceil(V(sigma_0) / (beta alpha^2)): nominal reaching-step bound.
inline std::size_t reaching_step_bound(const Vec& sigma0, double alpha, double beta) {
    if (!(beta > 0.0)) throw Error(ErrorKind::precondition, "reaching bound needs beta > 0");
    return static_cast<std::size_t>(std::ceil(sign_lyapunov_initial(sigma0, alpha) / (beta * alpha * alpha)));
}

/**
 * Analytic reaching-time bound V(sigma_0) / (alpha^2 (gamma - delta*)) + h*, with
 * gamma the smallest eigenvalue of CB_s and delta* = ||CB*_s/h* - CB_s||_2.
 * Infinite when gamma <= delta*.
 */
inline double reaching_time_bound(const Plant& plant, const Vec& sigma0, double h_star) {
    if (!(h_star > 0.0)) throw Error(ErrorKind::precondition, "reaching time bound needs h* > 0");
    const double gamma = spectral_bounds(plant.CB()).min_sym_eig;
    const Mat cb_star = plant.C() * psi(plant.A(), h_star) * plant.B();
    const Mat delta = symmetric_part(cb_star) / h_star - symmetric_part(plant.CB());
    const double delta_max = spectral_bounds(delta).spectral_norm;
    if (gamma <= delta_max) return std::numeric_limits<double>::infinity();
    const double alpha = plant.alpha();
    return sign_lyapunov_initial(sigma0, alpha) / (alpha * alpha * (gamma - delta_max)) + h_star;
}

struct ReachingReport {
    std::optional<double> empirical; // h * reaching_step
    double analytic;
};

inline ReachingReport reaching_report(const Trace& tr, const Plant& plant, double h_star) {
    ReachingReport r{std::nullopt, reaching_time_bound(plant, tr.sigma.front(), h_star)};
    if (tr.reaching_step) r.empirical = tr.h * static_cast<double>(*tr.reaching_step);
    return r;
}

} // namespace smclab
