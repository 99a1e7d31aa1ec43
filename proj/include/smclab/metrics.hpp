#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "controllers.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "linops.hpp"
#include "quadrature.hpp"
#include "sim.hpp"

namespace smclab {

/**
 * Signed one-step change Delta sigma = sigma_{k+1} - sigma_k under the given
 * equivalent law alone (u_s = 0, no perturbation).
 *
 * Evaluated as C A Psi x + CB* u_eq, algebraically equal to
 * C(e^{Ah} x + B* u_eq) - C x but free of the cancellation in e^{Ah} - I.
 */
inline Vec one_step_sigma_delta(const SampledPlant& sp, EqLaw law, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    const Vec u = u_eq(sp, law, x_k, gain);
    return sp.plant().C() * (sp.a_psi() * x_k) + sp.cb_star() * u;
}

inline double one_step_sigma_error(const SampledPlant& sp, EqLaw law, const Vec& x_k, GainMatrix gain = GainMatrix::cb) {
    return one_step_sigma_delta(sp, law, x_k, gain).norm();
}

/// Relative level below which a one-step error is indistinguishable from rounding.
inline constexpr double measurement_floor_rel = 1e-13;

/// measurement_floor_rel (||C A Psi x|| + ||CB* u_eq||): the size of the terms that cancel in Delta sigma.
inline double one_step_measurement_floor(const SampledPlant& sp, EqLaw law, const Vec& x_k,
                                         GainMatrix gain = GainMatrix::cb) {
    const Vec u = u_eq(sp, law, x_k, gain);
    return measurement_floor_rel * ((sp.plant().C() * (sp.a_psi() * x_k)).norm() + (sp.cb_star() * u).norm());
}

struct OrderFit {
    std::vector<double> hs;
    std::vector<double> errors;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// count points from hi down to lo, evenly spaced in log h.
inline std::vector<double> log_space_descending(double hi, double lo, std::size_t count) {
    if (!(hi > lo) || !(lo > 0.0) || count < 2) throw Error(ErrorKind::domain, "log range needs hi > lo > 0, count >= 2");
    std::vector<double> out(count);
    const double a = std::log(hi);
    const double b = std::log(lo);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    out.front() = hi;
    out.back() = lo;
    return out;
}

/**
 * Least squares of log(error) on log(h). Points with error <= floor (or
 * non-finite) are excluded; fewer than 4 usable points is a fit error.
 */
inline OrderFit fit_order(const std::vector<double>& hs, const std::vector<double>& errors, double floor = 0.0) {
    if (hs.size() != errors.size()) throw Error(ErrorKind::dimension, "hs and errors differ in length");
    for (std::size_t i = 1; i < hs.size(); ++i) {
        if (!(hs[i] < hs[i - 1])) throw Error(ErrorKind::domain, "timesteps must be strictly decreasing");
    }
    OrderFit fit;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        if (hs[i] > 0.0 && std::isfinite(errors[i]) && errors[i] > floor && errors[i] > 0.0) {
            fit.hs.push_back(hs[i]);
            fit.errors.push_back(errors[i]);
        }
    }
    const std::size_t m = fit.hs.size();
    if (m < 4) throw Error(ErrorKind::fit, "fewer than 4 usable points (" + std::to_string(m) + ")");
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += std::log(fit.hs[i]);
        sy += std::log(fit.errors[i]);
    }
    const double mx = sx / static_cast<double>(m);
    const double my = sy / static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = std::log(fit.hs[i]) - mx;
        const double dy = std::log(fit.errors[i]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

/// sum_k ||f_k - f_{k-1}||.
inline double variation_step(const std::vector<Vec>& values) {
    double total = 0.0;
    for (std::size_t k = 1; k < values.size(); ++k) total += (values[k] - values[k - 1]).norm();
    return total;
}

/**
 * int_{t0}^{t1} ||xi'(t)|| dt for the built-in perturbation kinds.
 *
 * The interval is cut at derivative kinks and at the sign changes of w'(t)
 * (located by bisection), so each piece has an analytic integrand and a
 * 20-node Gauss-Legendre rule converges to round-off.
 */
inline double variation_smooth(const Perturbation& xi, double t0, double t1, Eigen::Index p) {
    if (!(t1 > t0)) throw Error(ErrorKind::domain, "variation interval needs t1 > t0");
    if (!xi.is_builtin()) throw Error(ErrorKind::capability, "variation needs a perturbation with analytic derivative");
    if (xi.is_zero()) return 0.0;
    const double scale = xi.direction_norm(p);
    const auto& q = xi.params();
    double omega = 0.0;
    switch (xi.kind()) {
    case PerturbationKind::sine:
    case PerturbationKind::scaled_sine: omega = std::abs(q[1]); break;
    case PerturbationKind::decaying_sine: omega = std::abs(q[2]); break;
    default: break;
    }
    const double panel = omega > 0.0 ? std::numbers::pi / (8.0 * omega) : (t1 - t0);

    std::vector<double> cuts{t0};
    for (double kink : xi.kinks()) {
        if (kink > t0 && kink < t1) cuts.push_back(kink);
    }
    cuts.push_back(t1);

    const auto deriv = [&xi](double t) { return xi.waveform_derivative(t); };
    std::vector<double> breaks;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double a = cuts[s];
        const double b = cuts[s + 1];
        const auto panels = static_cast<std::size_t>(std::ceil((b - a) / panel));
        breaks.push_back(a);
        // Evaluate just inside the piece so one-sided derivatives at kinks are used.
        const double inset = 1e-14 * std::max(1.0, std::abs(b));
        for (std::size_t j = 0; j < panels; ++j) {
            double lo = a + (b - a) * static_cast<double>(j) / static_cast<double>(panels);
            double hi = a + (b - a) * static_cast<double>(j + 1) / static_cast<double>(panels);
            double flo = deriv(j == 0 ? lo + inset : lo);
            const double fhi = deriv(j + 1 == panels ? hi - inset : hi);
            if (flo == 0.0 || fhi == 0.0 || (flo > 0.0) == (fhi > 0.0)) continue;
            for (int it = 0; it < 200 && hi - lo > 4e-16 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = deriv(mid);
                if ((fm > 0.0) == (flo > 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            breaks.push_back(0.5 * (lo + hi));
        }
    }
    breaks.push_back(t1);

    const GaussRule rule = gauss_legendre(20);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (breaks[i + 1] <= breaks[i]) continue;
        total += integrate(rule, breaks[i], breaks[i + 1], [&](double t) { return std::abs(deriv(t)); });
    }
    return scale * total;
}

struct ChatterIndices {
    double c1 = 0.0;
    double c2 = 0.0;
    double window = 0.0;
};

/// Index of the first grid point with t_k >= t_end - window.
inline std::size_t window_start(const Trace& tr, double window) {
    const double from = tr.t_end() - window - 1e-9 * tr.h;
    std::size_t k = 0;
    while (k < tr.times.size() && tr.times[k] < from) ++k;
    return k;
}

/**
 * C1 = sum of |sigma_k|_1 and C2 = variation of u_s over the steps with
 * t_k >= t_end - window.
 */
inline ChatterIndices chatter_indices(const Trace& tr, double window) {
    if (!(window > 0.0) || window > tr.t_end() + 1e-9 * tr.h) {
        throw Error(ErrorKind::domain, "window must lie within the trace duration");
    }
    const std::size_t start = window_start(tr, window);
    ChatterIndices ci;
    ci.window = window;
    for (std::size_t k = start; k < tr.sigma.size(); ++k) ci.c1 += tr.sigma[k].lpNorm<1>();
    if (start < tr.u_s.size()) {
        const std::vector<Vec> tail(tr.u_s.begin() + static_cast<std::ptrdiff_t>(start), tr.u_s.end());
        ci.c2 = variation_step(tail);
    }
    return ci;
}

/**
 * sup over reference grid points t >= t_from (and before the last control
 * interval ends) of max_i |u_s(t) - ubar_s(t)|, with ubar_s held over
 * [t_k, t_{k+1}). The reference spacing must divide the trace timestep.
 */
inline double us_sup_distance(const Trace& tr, const Trace& reference, double t_from = 0.0) {
    if (tr.u_s.empty() || reference.u_s.empty()) return 0.0;
    if (reference.times.size() == tr.times.size() && reference.h == tr.h) {
        double d = 0.0;
        for (std::size_t k = 0; k < std::min(tr.u_s.size(), reference.u_s.size()); ++k) {
            if (tr.times[k] + 1e-9 * tr.h < t_from) continue;
            d = std::max(d, (tr.u_s[k] - reference.u_s[k]).cwiseAbs().maxCoeff());
        }
        return d;
    }
    const double ratio = tr.h / reference.h;
    const double refine = std::round(ratio);
    if (!(refine >= 1.0) || std::abs(ratio - refine) > 1e-9 * ratio) {
        throw Error(ErrorKind::alignment, "reference grid does not refine the trace grid");
    }
    const auto r = static_cast<std::size_t>(refine);
    double d = 0.0;
    const std::size_t limit = std::min(reference.u_s.size(), tr.u_s.size() * r);
    for (std::size_t j = 0; j < limit; ++j) {
        if (reference.times[j] + 1e-9 * reference.h < t_from) continue;
        d = std::max(d, (tr.u_s[j / r] - reference.u_s[j]).cwiseAbs().maxCoeff());
    }
    return d;
}

/// V = sigma^T M^{-1} sigma, the quadratic Lyapunov function for symmetric positive-definite M.
inline double quadratic_lyapunov(const Mat& m, const Vec& sigma) { return sigma.dot(solve(m, sigma, "Lyapunov matrix")); }

/// V_k = -(u_{k-1})^T sigma_k for the sign law; u_{-1} = -alpha sgn(sigma_0).
inline std::vector<double> sign_lyapunov_sequence(const SlidingRecursion& rec, double alpha) {
    std::vector<double> v;
    v.push_back(sign_lyapunov_initial(rec.sigma.front(), alpha));
    for (std::size_t k = 1; k < rec.sigma.size(); ++k) v.push_back(-rec.u_s[k - 1].dot(rec.sigma[k]));
    return v;
}

/**
 * State with C x = sigma built as Pi x_base + C^T (C C^T)^{-1} sigma: the
 * component of x_base on the sliding manifold plus the least-norm offset.
 */
inline Vec seed_near_manifold(const Plant& plant, const Vec& x_base, const Vec& sigma) {
    const Mat& c = plant.C();
    const Vec offset = c.transpose() * solve(c * c.transpose(), sigma, "C C^T");
    return projector_pi(plant) * x_base + offset;
}

} // namespace smclab
