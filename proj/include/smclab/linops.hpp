#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

/**
 * @file linops.hpp
 * @brief Small dense real-matrix kernel.
 *
 * Matrix exponential, the ZOH integral Psi, sliding-surface projectors,
 * symmetric-part spectra and P-matrix certification. Sizes are desk scale
 * (n <= 20 states, p <= 12 inputs); nothing here is tuned for large problems.
 */

namespace smclab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr std::size_t max_state_dim = 20;
inline constexpr std::size_t max_p_matrix_dim = 12;

/// Relative pivot threshold below which a matrix is treated as singular.
inline constexpr double singular_pivot_tol = 1e-12;

inline void require_square(const Mat& m, std::string_view what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw Error(ErrorKind::dimension, std::string(what) + " must be square and non-empty, got " +
                                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// e^{M t}, scaling-and-squaring with a degree-13 Padé approximant.
inline Mat expm(const Mat& m, double t) {
    require_square(m, "expm argument");
    if (!std::isfinite(t)) throw Error(ErrorKind::domain, "expm time must be finite");
    Mat scaled = m * t;
    return scaled.exp();
}

/**
 * Psi(h) = int_0^h e^{A s} ds.
 *
 * Computed from the exponential of the block matrix [[A, I], [0, 0]] h, whose
 * upper-right block is exactly Psi.
 */
inline Mat psi(const Mat& a, double h) {
    require_square(a, "psi drift matrix");
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::domain, "psi timestep must be positive");
    const Eigen::Index n = a.rows();
    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = a;
    block.topRightCorner(n, n) = Mat::Identity(n, n);
    const Mat e = expm(block, h);
    return e.topRightCorner(n, n);
}

/// Truncated series sum_l A^l h^{l+1} / (l+1)!; cross-check for psi().
inline Mat psi_series(const Mat& a, double h) {
    require_square(a, "psi drift matrix");
    if (!(h > 0.0)) throw Error(ErrorKind::domain, "psi timestep must be positive");
    const Eigen::Index n = a.rows();
    Mat term = Mat::Identity(n, n) * h;
    Mat sum = term;
    for (int l = 1; l < 60; ++l) {
        term = a * term * (h / static_cast<double>(l + 1));
        sum += term;
        if (max_abs(term) < 1e-16 * max_abs(sum)) break;
    }
    return sum;
}

namespace detail {

inline Eigen::PartialPivLU<Mat> checked_lu(const Mat& m, std::string_view what, ErrorKind kind) {
    require_square(m, what);
    Eigen::PartialPivLU<Mat> lu(m);
    const double scale = max_abs(m);
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(scale > 0.0) || min_pivot < singular_pivot_tol * scale) {
        throw Error(kind, std::string(what) + " is numerically singular");
    }
    return lu;
}

} // namespace detail

/// Inverse by partial-pivot LU; throws when a pivot falls under 1e-12 x max|m|.
inline Mat inverse(const Mat& m, std::string_view what = "matrix", ErrorKind kind = ErrorKind::rank) {
    return detail::checked_lu(m, what, kind).inverse();
}

inline Vec solve(const Mat& m, const Vec& rhs, std::string_view what = "matrix", ErrorKind kind = ErrorKind::rank) {
    if (rhs.size() != m.rows()) throw Error(ErrorKind::dimension, "right-hand side size mismatch");
    return detail::checked_lu(m, what, kind).solve(rhs);
}

struct SpectralBounds {
    double min_sym_eig;
    double max_sym_eig;
    double spectral_norm;
};

inline Mat symmetric_part(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline SpectralBounds spectral_bounds(const Mat& m) {
    require_square(m, "spectral_bounds argument");
    Eigen::SelfAdjointEigenSolver<Mat> eig(symmetric_part(m), Eigen::EigenvaluesOnly);
    const Vec& ev = eig.eigenvalues();
    Eigen::JacobiSVD<Mat> svd(m);
    return SpectralBounds{ev.minCoeff(), ev.maxCoeff(), svd.singularValues()(0)};
}

/**
 * P-matrix test by enumeration of all 2^n - 1 principal minors.
 *
 * A minor counts as positive only when it clears 1e-13 x (max|entry|)^k, so
 * matrices with a numerically vanishing minor are rejected.
 */
inline bool is_p_matrix(const Mat& m) {
    require_square(m, "is_p_matrix argument");
    const auto n = static_cast<std::size_t>(m.rows());
    if (n > max_p_matrix_dim) {
        throw Error(ErrorKind::capability,
                    "principal-minor enumeration is capped at n = " + std::to_string(max_p_matrix_dim));
    }
    std::vector<Eigen::Index> idx;
    idx.reserve(n);
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        idx.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) idx.push_back(static_cast<Eigen::Index>(i));
        }
        const auto k = static_cast<Eigen::Index>(idx.size());
        Mat sub(k, k);
        for (Eigen::Index r = 0; r < k; ++r)
            for (Eigen::Index c = 0; c < k; ++c) sub(r, c) = m(idx[r], idx[c]);
        const double scale = max_abs(sub);
        const double det = k == 1 ? sub(0, 0) : sub.partialPivLu().determinant();
        if (!(det > 1e-13 * std::pow(scale, static_cast<double>(k)))) return false;
    }
    return true;
}

/// Pi = I - B (CB)^{-1} C, the projector along range(B) onto ker(C).
inline Mat projector_pi(const Mat& b, const Mat& c) {
    if (c.cols() != b.rows() || c.rows() != b.cols()) {
        throw Error(ErrorKind::dimension, "projector needs B n x p and C p x n");
    }
    const Mat cb_inv = inverse(c * b, "CB", ErrorKind::rank);
    return Mat::Identity(b.rows(), b.rows()) - b * cb_inv * c;
}

/// Phi(t) = e^{Pi A t}, transition matrix of the sliding dynamics.
inline Mat state_transition_phi(const Mat& a, const Mat& b, const Mat& c, double t) {
    if (!(t >= 0.0)) throw Error(ErrorKind::domain, "transition time must be non-negative");
    return expm(projector_pi(b, c) * a, t);
}

} // namespace smclab
