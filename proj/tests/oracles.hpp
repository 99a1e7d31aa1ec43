#pragma once

// Reference computations used only by the tests. None of them call into the
// library's numerical kernels: the exponential is a plain Taylor series with
// scaling and squaring, integrals are composite or adaptive Simpson, and the
// AVI oracle checks every sign pattern.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// e^{M} by Taylor series after scaling M down to norm <= 1/8.
inline Mat taylor_expm(const Mat& m) {
    const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    double scale = 1.0;
    while (norm * scale > 0.125) {
        scale *= 0.5;
        ++squarings;
    }
    const Mat a = m * scale;
    Mat term = Mat::Identity(m.rows(), m.cols());
    Mat sum = term;
    for (int k = 1; k < 30; ++k) {
        term = term * a / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

/// int_0^h e^{As} ds by composite Simpson on `panels` (even) subintervals.
inline Mat simpson_psi(const Mat& a, double h, int panels = 2000) {
    const double dx = h / panels;
    Mat sum = Mat::Zero(a.rows(), a.cols());
    for (int i = 0; i <= panels; ++i) {
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        sum += w * taylor_expm(a * (i * dx));
    }
    return sum * dx / 3.0;
}

/// Closed form for the 2x2 benchmark A = [0 1; 19 -2], eigenvalues -1 +- sqrt(20).
inline Mat benchmark_expm(double t) {
    const double r = std::sqrt(20.0);
    const double l1 = -1.0 + r;
    const double l2 = -1.0 - r;
    // e^{At} = (e^{l1 t}(A - l2 I) - e^{l2 t}(A - l1 I)) / (l1 - l2)
    Mat a(2, 2);
    a << 0.0, 1.0, 19.0, -2.0;
    const Mat i = Mat::Identity(2, 2);
    return (std::exp(l1 * t) * (a - l2 * i) - std::exp(l2 * t) * (a - l1 * i)) / (l1 - l2);
}

/// Adaptive Simpson on a vector-valued integrand.
inline Vec adaptive_simpson(const std::function<Vec(double)>& f, double a, double b, double tol, int depth = 40) {
    const std::function<Vec(double, double, const Vec&, const Vec&, const Vec&, const Vec&, double, int)> rec =
        [&](double lo, double hi, const Vec& flo, const Vec& fmid, const Vec& fhi, const Vec& whole, double eps,
            int d) -> Vec {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid);
        const double rm = 0.5 * (mid + hi);
        const Vec flm = f(lm);
        const Vec frm = f(rm);
        const Vec left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const Vec right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        const Vec delta = left + right - whole;
        if (d <= 0 || delta.cwiseAbs().maxCoeff() <= 15.0 * eps) return left + right + delta / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, 0.5 * eps, d - 1) + rec(mid, hi, fmid, frm, fhi, right, 0.5 * eps, d - 1);
    };
    const Vec fa = f(a);
    const Vec fb = f(b);
    const Vec fm = f(0.5 * (a + b));
    const Vec whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return rec(a, b, fa, fm, fb, whole, tol, depth);
}

/// p_k = int_{t_k}^{t_k + h} e^{A(t_k + h - tau)} B xi(tau) dtau.
inline Vec perturbation_integral(const Mat& a, const Mat& b, const std::function<Vec(double)>& xi, double t_k, double h,
                                 double tol = 1e-13) {
    return adaptive_simpson([&](double tau) -> Vec { return taylor_expm(a * (t_k + h - tau)) * b * xi(tau); }, t_k,
                            t_k + h, tol);
}

struct AVIBruteForce {
    std::vector<Vec> solutions; // every consistent sign pattern's z
};

/**
 * Tries all 3^p patterns s_i in {-1, 0, +1}: s_i = +-1 fixes z_i = -+alpha and
 * demands w_i = (q + M z)_i with matching sign (w_i >= 0 for z_i = -alpha),
 * s_i = 0 demands w_i = 0 with |z_i| <= alpha.
 */
inline AVIBruteForce brute_force_avi(const Mat& m, const Vec& q, double alpha, double tol = 1e-10) {
    const auto p = static_cast<int>(q.size());
    int total = 1;
    for (int i = 0; i < p; ++i) total *= 3;
    AVIBruteForce out;
    for (int code = 0; code < total; ++code) {
        std::vector<int> s(static_cast<std::size_t>(p));
        int rest = code;
        for (int i = 0; i < p; ++i) {
            s[static_cast<std::size_t>(i)] = rest % 3 - 1;
            rest /= 3;
        }
        std::vector<int> free;
        Vec z = Vec::Zero(p);
        for (int i = 0; i < p; ++i) {
            if (s[static_cast<std::size_t>(i)] == 0) free.push_back(i);
            else z(i) = -alpha * s[static_cast<std::size_t>(i)];
        }
        if (!free.empty()) {
            const auto k = static_cast<int>(free.size());
            Mat mf(k, k);
            Vec rhs(k);
            for (int r = 0; r < k; ++r) {
                rhs(r) = -q(free[static_cast<std::size_t>(r)]);
                for (int c = 0; c < p; ++c) {
                    if (s[static_cast<std::size_t>(c)] != 0) rhs(r) -= m(free[static_cast<std::size_t>(r)], c) * z(c);
                }
                for (int c = 0; c < k; ++c) mf(r, c) = m(free[static_cast<std::size_t>(r)], free[static_cast<std::size_t>(c)]);
            }
            Eigen::FullPivLU<Mat> lu(mf);
            if (!lu.isInvertible()) continue;
            const Vec zf = lu.solve(rhs);
            for (int r = 0; r < k; ++r) z(free[static_cast<std::size_t>(r)]) = zf(r);
        }
        const Vec w = q + m * z;
        bool ok = true;
        for (int i = 0; i < p && ok; ++i) {
            const int si = s[static_cast<std::size_t>(i)];
            if (si == 0) ok = std::abs(z(i)) <= alpha + tol;
            else ok = si * w(i) >= -tol;
        }
        if (ok) out.solutions.push_back(z);
    }
    return out;
}

/// Random P-matrix: D + S with D positive diagonal and S small relative to D (strict diagonal dominance)
/// or a positive-definite non-symmetric matrix, alternating by `kind`.
inline Mat random_p_matrix(std::mt19937_64& rng, int p, int kind) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat m(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) m(i, j) = u(rng);
    if (kind % 2 == 0) {
        // strictly row diagonally dominant with positive diagonal
        for (int i = 0; i < p; ++i) m(i, i) = m.row(i).cwiseAbs().sum() + 0.1 + std::abs(u(rng));
    } else {
        // G^T G + eps I plus a skew part: positive definite, not symmetric
        const Mat g = m;
        Mat k(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) k(i, j) = u(rng);
        m = g.transpose() * g + 0.1 * Mat::Identity(p, p) + (k - k.transpose());
    }
    return m;
}

/// Independent principal-minor P-matrix check via full-pivot LU determinants.
inline bool is_p_matrix(const Mat& m) {
    const auto n = static_cast<int>(m.rows());
    for (int mask = 1; mask < (1 << n); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (mask & (1 << i)) idx.push_back(i);
        const auto k = static_cast<int>(idx.size());
        Mat sub(k, k);
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < k; ++c) sub(r, c) = m(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
        if (!(sub.fullPivLu().determinant() > 0.0)) return false;
    }
    return true;
}

/// int |f'| on [a, b] by a fine composite trapezoid on |f'| (reference for smooth variations).
inline double trapezoid_abs(const std::function<double(double)>& fprime, double a, double b, int n) {
    const double dx = (b - a) / n;
    double s = 0.5 * (std::abs(fprime(a)) + std::abs(fprime(b)));
    for (int i = 1; i < n; ++i) s += std::abs(fprime(a + i * dx));
    return s * dx;
}

} // namespace oracle
