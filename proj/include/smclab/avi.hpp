#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "error.hpp"
#include "linops.hpp"

/**
 * @file avi.hpp
 * @brief Box-constrained affine variational inequalities.
 *
 * Find z in [-alpha, alpha]^p with (y - z)^T (q + M z) >= 0 for every y in the
 * box, equivalently 0 in q + M z + N_box(z). With sigma_tilde = q + M z this is
 * the implicit sign law z in -alpha Sgn(sigma_tilde). A P-matrix M makes the
 * solution unique.
 */

namespace smclab {

struct BoxAVI {
    Mat M;
    Vec q;
    double alpha;
};

struct AVISolution {
    Vec z;
    double residual = 0.0;
    Vec sigma_tilde;
    bool unique = false;
};

/// Whether solve_box_avi certifies the P-matrix property itself.
enum class PMatrixCheck { verify, assume_certified };

inline constexpr std::size_t max_enumeration_dim = 8;
inline constexpr double pgs_tolerance = 1e-12;
inline constexpr std::size_t pgs_max_sweeps = 100000;

inline double clamp_box(double v, double alpha) { return std::clamp(v, -alpha, alpha); }

/// Natural-map fixed-point gap max_i |z_i - clamp(z_i - (Mz + q)_i)|; zero exactly at solutions.
inline double natural_map_residual(const BoxAVI& avi, const Vec& z) {
    const Vec w = avi.q + avi.M * z;
    double r = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) r = std::max(r, std::abs(z(i) - clamp_box(z(i) - w(i), avi.alpha)));
    return r;
}

namespace detail {

inline void validate(const BoxAVI& avi) {
    require_square(avi.M, "AVI matrix");
    if (avi.q.size() != avi.M.rows()) throw Error(ErrorKind::dimension, "AVI vector q must have size p");
    if (!(avi.alpha > 0.0)) throw Error(ErrorKind::domain, "AVI box half-width must be positive");
}

inline double avi_scale(const BoxAVI& avi) {
    return std::max({avi.q.cwiseAbs().maxCoeff(), avi.alpha * avi.M.cwiseAbs().rowwise().sum().maxCoeff(), 1e-300});
}

enum class Status : int { interior = 0, lower = 1, upper = 2 };

// First consistent active set in lexicographic order (interior < lower < upper,
// first coordinate most significant).
inline bool enumerate_active_sets(const BoxAVI& avi, Vec& z, Vec& w) {
    const Eigen::Index p = avi.M.rows();
    const double tol = 1e-12 * avi_scale(avi);
    std::vector<int> status(static_cast<std::size_t>(p), 0);
    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(p));
    std::size_t total = 1;
    for (Eigen::Index i = 0; i < p; ++i) total *= 3;

    for (std::size_t code = 0; code < total; ++code) {
        std::size_t rest = code;
        for (Eigen::Index i = p - 1; i >= 0; --i) {
            status[static_cast<std::size_t>(i)] = static_cast<int>(rest % 3);
            rest /= 3;
        }
        free.clear();
        for (Eigen::Index i = 0; i < p; ++i) {
            const int s = status[static_cast<std::size_t>(i)];
            if (s == static_cast<int>(Status::interior)) free.push_back(i);
            z(i) = s == static_cast<int>(Status::lower) ? -avi.alpha : (s == static_cast<int>(Status::upper) ? avi.alpha : 0.0);
        }
        if (!free.empty()) {
            const auto k = static_cast<Eigen::Index>(free.size());
            Mat mff(k, k);
            Vec rhs(k);
            for (Eigen::Index r = 0; r < k; ++r) {
                rhs(r) = -avi.q(free[r]);
                for (Eigen::Index c = 0; c < p; ++c) {
                    if (status[static_cast<std::size_t>(c)] != static_cast<int>(Status::interior)) {
                        rhs(r) -= avi.M(free[r], c) * z(c);
                    }
                }
                for (Eigen::Index c = 0; c < k; ++c) mff(r, c) = avi.M(free[r], free[c]);
            }
            Vec zf;
            try {
                zf = solve(mff, rhs, "AVI principal block");
            } catch (const Error&) {
                continue;
            }
            bool inside = true;
            for (Eigen::Index r = 0; r < k && inside; ++r) inside = std::abs(zf(r)) <= avi.alpha + tol;
            if (!inside) continue;
            for (Eigen::Index r = 0; r < k; ++r) z(free[r]) = clamp_box(zf(r), avi.alpha);
        }
        w = avi.q + avi.M * z;
        bool consistent = true;
        for (Eigen::Index i = 0; i < p && consistent; ++i) {
            const int s = status[static_cast<std::size_t>(i)];
            if (s == static_cast<int>(Status::lower)) consistent = w(i) >= -tol;
            else if (s == static_cast<int>(Status::upper)) consistent = w(i) <= tol;
        }
        if (!consistent) continue;
        for (Eigen::Index i : free) w(i) = 0.0;
        return true;
    }
    return false;
}

inline bool projected_gauss_seidel(const BoxAVI& avi, Vec& z, Vec& w) {
    const Eigen::Index p = avi.M.rows();
    const double tol = pgs_tolerance * avi_scale(avi);
    z.setZero();
    for (std::size_t sweep = 0; sweep < pgs_max_sweeps; ++sweep) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double r = avi.q(i) + avi.M.row(i).dot(z);
            const double next = clamp_box(z(i) - r / avi.M(i, i), avi.alpha);
            change = std::max(change, std::abs(next - z(i)));
            z(i) = next;
        }
        if (change <= tol && natural_map_residual(avi, z) <= tol) {
            w = avi.q + avi.M * z;
            for (Eigen::Index i = 0; i < p; ++i) {
                if (std::abs(z(i)) < avi.alpha) w(i) = 0.0;
            }
            return true;
        }
    }
    w = avi.q + avi.M * z;
    return false;
}

} // namespace detail

/**
 * Scalar case: z = -clamp(q / m, -alpha, alpha). Inside the box the next
 * sliding variable is set to exactly zero.
 */
inline AVISolution solve_scalar(const BoxAVI& avi) {
    detail::validate(avi);
    if (avi.M.rows() != 1) throw Error(ErrorKind::dimension, "solve_scalar needs p = 1");
    const double m = avi.M(0, 0);
    if (!(m > 0.0)) throw Error(ErrorKind::not_p_matrix, "scalar AVI needs m > 0");
    const double ratio = avi.q(0) / m;
    AVISolution sol;
    sol.z = Vec::Constant(1, -clamp_box(ratio, avi.alpha));
    sol.sigma_tilde = std::abs(ratio) < avi.alpha ? Vec::Zero(1) : Vec(avi.q + avi.M * sol.z);
    sol.residual = natural_map_residual(avi, sol.z);
    sol.unique = true;
    return sol;
}

/**
 * General box AVI. Active-set enumeration over 3^p status patterns for
 * p <= 8, projected Gauss-Seidel above that. Refuses non-P matrices.
 */
inline AVISolution solve_box_avi(const BoxAVI& avi, PMatrixCheck check = PMatrixCheck::verify) {
    detail::validate(avi);
    const Eigen::Index p = avi.M.rows();
    if (check == PMatrixCheck::verify && !is_p_matrix(avi.M)) {
        throw Error(ErrorKind::not_p_matrix, "AVI matrix is not a P-matrix; solution set may be ambiguous");
    }
    if (p == 1) return solve_scalar(avi);

    AVISolution sol;
    sol.z = Vec::Zero(p);
    sol.sigma_tilde = Vec::Zero(p);
    bool ok = false;
    if (static_cast<std::size_t>(p) <= max_enumeration_dim) ok = detail::enumerate_active_sets(avi, sol.z, sol.sigma_tilde);
    if (!ok) ok = detail::projected_gauss_seidel(avi, sol.z, sol.sigma_tilde);
    sol.residual = natural_map_residual(avi, sol.z);
    if (!ok) {
        throw Error(ErrorKind::iteration_limit, "box AVI solver did not converge, residual " + std::to_string(sol.residual));
    }
    sol.unique = true;
    return sol;
}

/**
 * Checks the variational inequality at the 2p box-face candidates y = z with
 * y_i = +-alpha, plus membership of z in -alpha Sgn(q + M z) per coordinate.
 */
inline bool verify_inclusion(const BoxAVI& avi, const Vec& z, double tol) {
    detail::validate(avi);
    if (z.size() != avi.q.size()) return false;
    const Vec w = avi.q + avi.M * z;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (std::abs(z(i)) > avi.alpha + tol) return false;
        if ((avi.alpha - z(i)) * w(i) < -tol) return false;
        if ((-avi.alpha - z(i)) * w(i) < -tol) return false;
        if (w(i) > tol && std::abs(z(i) + avi.alpha) > tol) return false;
        if (w(i) < -tol && std::abs(z(i) - avi.alpha) > tol) return false;
    }
    return true;
}

} // namespace smclab
