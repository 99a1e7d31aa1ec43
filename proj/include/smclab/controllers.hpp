#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "avi.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "linops.hpp"

namespace smclab {

/// Discretizations of the equivalent control u_eq = -(CB)^{-1} CA x.
enum class EqLaw { explicit_, implicit, midpoint, exact, continuous_reference };

/// Discretizations of the discontinuous control u_s in -alpha Sgn(sigma).
enum class UsKind { explicit_sign, implicit_avi, saturation, off };

/// Matrix inverted by the explicit/implicit/midpoint equivalent laws.
enum class GainMatrix { cb, cb_star };

struct UsLaw {
    UsKind kind = UsKind::implicit_avi;
    double epsilon = 0.0; // saturation width, used iff kind == saturation

    static UsLaw explicit_sign() { return {UsKind::explicit_sign, 0.0}; }
    static UsLaw implicit_avi() { return {UsKind::implicit_avi, 0.0}; }
    static UsLaw off() { return {UsKind::off, 0.0}; }
    static UsLaw saturation(double epsilon) {
        if (!(epsilon > 0.0)) throw Error(ErrorKind::config, "saturation epsilon must be positive");
        return {UsKind::saturation, epsilon};
    }
};

inline constexpr std::string_view to_string(EqLaw law) {
    switch (law) {
    case EqLaw::explicit_: return "explicit";
    case EqLaw::implicit: return "implicit";
    case EqLaw::midpoint: return "midpoint";
    case EqLaw::exact: return "exact";
    case EqLaw::continuous_reference: return "continuous-reference";
    }
    return "?";
}

inline constexpr std::string_view to_string(UsKind kind) {
    switch (kind) {
    case UsKind::explicit_sign: return "explicit";
    case UsKind::implicit_avi: return "implicit";
    case UsKind::saturation: return "saturation";
    case UsKind::off: return "off";
    }
    return "?";
}

inline constexpr std::string_view to_string(GainMatrix g) { return g == GainMatrix::cb ? "CB" : "CBstar"; }

inline std::optional<EqLaw> parse_eq_law(std::string_view s) {
    for (EqLaw law : {EqLaw::explicit_, EqLaw::implicit, EqLaw::midpoint, EqLaw::exact, EqLaw::continuous_reference}) {
        if (s == to_string(law)) return law;
    }
    return std::nullopt;
}

inline std::optional<UsKind> parse_us_kind(std::string_view s) {
    for (UsKind k : {UsKind::explicit_sign, UsKind::implicit_avi, UsKind::saturation, UsKind::off}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

inline std::optional<GainMatrix> parse_gain_matrix(std::string_view s) {
    if (s == "CB") return GainMatrix::cb;
    if (s == "CBstar") return GainMatrix::cb_star;
    return std::nullopt;
}

namespace detail {

inline void require_state(const SampledPlant& sp, const Vec& x) {
    if (x.size() != sp.plant().n()) throw Error(ErrorKind::dimension, "state has wrong dimension");
}

inline void require_sigma(const SampledPlant& sp, const Vec& sigma) {
    if (sigma.size() != sp.plant().p()) throw Error(ErrorKind::dimension, "sliding variable has wrong dimension");
}

inline const Mat& gain_inverse(const SampledPlant& sp, GainMatrix gain) {
    return gain == GainMatrix::cb ? sp.plant().CB_inverse() : sp.cb_star_inverse();
}

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace detail

/// -(G)^{-1} CA x_k, G = CB by default.
inline Vec u_eq_explicit(const SampledPlant& sp, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    detail::require_state(sp, x_k);
    return -(detail::gain_inverse(sp, gain) * (sp.ca() * x_k));
}

/**
 * -(G)^{-1} CA x_{k+1} with x_{k+1} = W^{-1} e^{Ah} x_k, W = I + Psi B G^{-1} C A.
 * The resolvent is the u_s-free one, so the law depends on x_k only.
 */
inline Vec u_eq_implicit(const SampledPlant& sp, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    detail::require_state(sp, x_k);
    const Mat& g_inv = detail::gain_inverse(sp, gain);
    if (gain == GainMatrix::cb) return -(g_inv * (sp.ca() * (sp.implicit_resolvent() * x_k)));
    const Eigen::Index n = sp.plant().n();
    const Mat w = Mat::Identity(n, n) + sp.psi() * sp.plant().B() * g_inv * sp.ca();
    const Vec next = solve(w, sp.e_Ah() * x_k, "W = I + Psi Pi_B A", ErrorKind::timestep);
    return -(g_inv * (sp.ca() * next));
}

inline Vec u_eq_midpoint(const SampledPlant& sp, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    return 0.5 * (u_eq_explicit(sp, x_k, gain) + u_eq_implicit(sp, x_k, gain));
}

/// (CB*)^{-1} C (I - e^{Ah}) x_k: keeps C x constant over one step when u_s = 0.
inline Vec u_eq_exact(const SampledPlant& sp, const Vec& x_k) {
    detail::require_state(sp, x_k);
    return -(sp.cb_star_inverse() * (sp.plant().C() * (sp.a_psi() * x_k)));
}

inline Vec u_eq(const SampledPlant& sp, EqLaw law, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    switch (law) {
    case EqLaw::explicit_: return u_eq_explicit(sp, x_k, gain);
    case EqLaw::implicit: return u_eq_implicit(sp, x_k, gain);
    case EqLaw::midpoint: return u_eq_midpoint(sp, x_k, gain);
    case EqLaw::exact: return u_eq_exact(sp, x_k);
    case EqLaw::continuous_reference: break;
    }
    throw Error(ErrorKind::config, "continuous-reference is not a sampled equivalent law");
}

/// -alpha sgn(sigma_k), with sgn(0) = 0.
inline Vec u_s_explicit(const SampledPlant& sp, const Vec& sigma_k) {
    detail::require_sigma(sp, sigma_k);
    const double alpha = sp.plant().alpha();
    return sigma_k.unaryExpr([alpha](double s) { return -alpha * detail::sgn(s); });
}

struct ImplicitUs {
    Vec u_s;
    Vec sigma_tilde;
};

/// Solves sigma_tilde = sigma_k + CB* u, u in -alpha Sgn(sigma_tilde).
inline ImplicitUs u_s_implicit(const SampledPlant& sp, const Vec& sigma_k) {
    detail::require_sigma(sp, sigma_k);
    if (!sp.cb_star_is_p()) throw Error(ErrorKind::not_p_matrix, "implicit u_s needs CB* to be a P-matrix");
    const BoxAVI avi{sp.cb_star(), sigma_k, sp.plant().alpha()};
    AVISolution sol = solve_box_avi(avi, PMatrixCheck::assume_certified);
    return {std::move(sol.z), std::move(sol.sigma_tilde)};
}

/// -alpha sat_eps(sigma_k) componentwise.
inline Vec u_s_saturation(const SampledPlant& sp, const Vec& sigma_k, double epsilon) {
    detail::require_sigma(sp, sigma_k);
    if (!(epsilon > 0.0)) throw Error(ErrorKind::domain, "saturation epsilon must be positive");
    const double alpha = sp.plant().alpha();
    return sigma_k.unaryExpr([alpha, epsilon](double s) {
        return -alpha * (std::abs(s) <= epsilon ? s / epsilon : detail::sgn(s));
    });
}

/// Discrete-time sliding phase: every component of u_s strictly inside (-alpha, alpha).
inline bool in_sliding_phase(const Vec& u_s, double alpha) {
    return (u_s.array().abs() < alpha).all();
}

struct ControlStep {
    Vec u_eq;
    Vec u_s;
    std::optional<Vec> sigma_tilde_next;
    bool in_sliding_phase = false;
};

inline ControlStep control_step(const SampledPlant& sp, EqLaw eq_law, const UsLaw& us_law, const Vec& x_k,
                                GainMatrix gain = GainMatrix::cb) {
    ControlStep step;
    step.u_eq = u_eq(sp, eq_law, x_k, gain);
    const Vec sigma = sp.plant().C() * x_k;
    switch (us_law.kind) {
    case UsKind::explicit_sign: step.u_s = u_s_explicit(sp, sigma); break;
    case UsKind::implicit_avi: {
        ImplicitUs r = u_s_implicit(sp, sigma);
        step.u_s = std::move(r.u_s);
        step.sigma_tilde_next = std::move(r.sigma_tilde);
        break;
    }
    case UsKind::saturation: step.u_s = u_s_saturation(sp, sigma, us_law.epsilon); break;
    case UsKind::off: step.u_s = Vec::Zero(sp.plant().p()); break;
    }
    step.in_sliding_phase = in_sliding_phase(step.u_s, sp.plant().alpha());
    return step;
}

} // namespace smclab
