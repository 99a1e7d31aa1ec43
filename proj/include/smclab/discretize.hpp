#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "linops.hpp"
#include "quadrature.hpp"

namespace smclab {

/**
 * Continuous-time LTI plant x' = A x + B (u + xi), sigma = C x, with the
 * discontinuous gain alpha.
 *
 * Construction validates shapes, finiteness, alpha > 0 and invertibility of the
 * decoupling matrix CB (relative degree one in every channel).
 */
class Plant {
public:
    Plant(Mat a, Mat b, Mat c, double alpha) : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), alpha_(alpha) {
        if (a_.rows() != a_.cols() || a_.rows() == 0) throw Error(ErrorKind::config, "A must be square and nonempty");
        const auto n = a_.rows();
        if (static_cast<std::size_t>(n) > max_state_dim) {
            throw Error(ErrorKind::capability, "state dimension above " + std::to_string(max_state_dim));
        }
        if (b_.rows() != n || b_.cols() < 1) throw Error(ErrorKind::config, "B must be n x p with n = rows(A)");
        if (c_.cols() != n || c_.rows() != b_.cols()) throw Error(ErrorKind::config, "C must be p x n");
        if (!all_finite(a_) || !all_finite(b_) || !all_finite(c_)) {
            throw Error(ErrorKind::config, "plant matrices must be finite");
        }
        if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw Error(ErrorKind::config, "alpha must be positive");
        cb_ = c_ * b_;
        cb_inv_ = inverse(cb_, "decoupling matrix CB", ErrorKind::config);
    }

    const Mat& A() const noexcept { return a_; }
    const Mat& B() const noexcept { return b_; }
    const Mat& C() const noexcept { return c_; }
    double alpha() const noexcept { return alpha_; }
    const Mat& CB() const noexcept { return cb_; }
    const Mat& CB_inverse() const noexcept { return cb_inv_; }
    Eigen::Index n() const noexcept { return a_.rows(); }
    Eigen::Index p() const noexcept { return b_.cols(); }

    Plant with_alpha(double alpha) const { return Plant(a_, b_, c_, alpha); }

private:
    Mat a_;
    Mat b_;
    Mat c_;
    double alpha_;
    Mat cb_;
    Mat cb_inv_;
};

inline Mat projector_pi(const Plant& plant) { return projector_pi(plant.B(), plant.C()); }

inline Mat state_transition_phi(const Plant& plant, double t) {
    return state_transition_phi(plant.A(), plant.B(), plant.C(), t);
}

enum class PerturbationKind { none, decaying_sine, sine, scaled_sine, tabulated };

/**
 * Matched disturbance xi(t) in R^p.
 *
 * Built-in kinds are a scalar waveform w(t) times a direction vector
 * (all ones unless set):
 *   - sine:          a sin(w t)                         params {a, w}
 *   - decaying_sine: a exp(min(onset - t, 0)) sin(w t)  params {a, onset, w}
 *   - scaled_sine:   a sin(w t + phase) + offset        params {a, w, phase, offset}
 * The tabulated kind interpolates user samples with a natural cubic spline per
 * component and holds the end values outside the table.
 */
class Perturbation {
public:
    Perturbation() = default;

    static Perturbation none() { return Perturbation(); }

    static Perturbation sine(double amplitude, double omega) {
        return builtin(PerturbationKind::sine, {amplitude, omega});
    }

    static Perturbation decaying_sine(double amplitude, double onset, double omega) {
        return builtin(PerturbationKind::decaying_sine, {amplitude, onset, omega});
    }

    static Perturbation scaled_sine(double amplitude, double omega, double phase, double offset) {
        return builtin(PerturbationKind::scaled_sine, {amplitude, omega, phase, offset});
    }

    static Perturbation constant(double value) { return scaled_sine(0.0, 0.0, 0.0, value); }

    /// Rebuilds a built-in kind from its parameter list (config round trip).
    static Perturbation from_params(PerturbationKind kind, std::vector<double> params) {
        static constexpr std::size_t arity[] = {0, 3, 2, 4, 0};
        if (kind == PerturbationKind::tabulated) {
            throw Error(ErrorKind::config, "tabulated perturbations are built from samples");
        }
        if (params.size() != arity[static_cast<int>(kind)]) {
            throw Error(ErrorKind::config, "wrong number of perturbation parameters");
        }
        if (kind == PerturbationKind::none) return none();
        return builtin(kind, std::move(params));
    }

    /// times strictly increasing (>= 2 samples); values has one row per sample and p columns.
    static Perturbation tabulated(std::vector<double> times, Mat values) {
        if (times.size() < 2 || static_cast<Eigen::Index>(times.size()) != values.rows()) {
            throw Error(ErrorKind::config, "tabulated perturbation needs >= 2 samples with matching rows");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) throw Error(ErrorKind::config, "tabulated times must increase");
        }
        if (!all_finite(values)) throw Error(ErrorKind::config, "tabulated values must be finite");
        Perturbation xi;
        xi.kind_ = PerturbationKind::tabulated;
        xi.times_ = std::move(times);
        xi.values_ = std::move(values);
        xi.second_ = spline_second_derivatives(xi.times_, xi.values_);
        return xi;
    }

    Perturbation with_direction(Vec direction) const {
        if (kind_ == PerturbationKind::tabulated) {
            throw Error(ErrorKind::config, "tabulated perturbations carry their own components");
        }
        Perturbation copy = *this;
        copy.direction_ = std::move(direction);
        return copy;
    }

    PerturbationKind kind() const noexcept { return kind_; }
    const std::vector<double>& params() const noexcept { return params_; }
    const Vec& direction() const noexcept { return direction_; }
    const std::vector<double>& table_times() const noexcept { return times_; }
    const Mat& table_values() const noexcept { return values_; }
    bool is_zero() const noexcept { return kind_ == PerturbationKind::none; }
    bool is_builtin() const noexcept { return kind_ != PerturbationKind::tabulated; }

    /// Scalar waveform of a built-in kind.
    double waveform(double t) const {
        const auto& q = params_;
        switch (kind_) {
        case PerturbationKind::none: return 0.0;
        case PerturbationKind::sine: return q[0] * std::sin(q[1] * t);
        case PerturbationKind::decaying_sine: return q[0] * std::exp(std::min(q[1] - t, 0.0)) * std::sin(q[2] * t);
        case PerturbationKind::scaled_sine: return q[0] * std::sin(q[1] * t + q[2]) + q[3];
        case PerturbationKind::tabulated: break;
        }
        throw Error(ErrorKind::capability, "tabulated perturbation has no scalar waveform");
    }

    /// Derivative of the scalar waveform; one-sided (right) at the decay onset.
    double waveform_derivative(double t) const {
        const auto& q = params_;
        switch (kind_) {
        case PerturbationKind::none: return 0.0;
        case PerturbationKind::sine: return q[0] * q[1] * std::cos(q[1] * t);
        case PerturbationKind::decaying_sine: {
            const double w = q[2];
            if (t < q[1]) return q[0] * w * std::cos(w * t);
            const double decay = std::exp(q[1] - t);
            return q[0] * decay * (w * std::cos(w * t) - std::sin(w * t));
        }
        case PerturbationKind::scaled_sine: return q[0] * q[1] * std::cos(q[1] * t + q[2]);
        case PerturbationKind::tabulated: break;
        }
        throw Error(ErrorKind::capability, "tabulated perturbation is not differentiable in closed form");
    }

    /// Points where the derivative may jump.
    std::vector<double> kinks() const {
        if (kind_ == PerturbationKind::decaying_sine) return {params_[1]};
        return {};
    }

    /// Euclidean norm of the direction; sqrt(p) for the default all-ones direction.
    double direction_norm(Eigen::Index p) const {
        return direction_.size() == 0 ? std::sqrt(static_cast<double>(p)) : direction_.norm();
    }

    void evaluate_into(double t, Eigen::Ref<Vec> out) const {
        const Eigen::Index p = out.size();
        if (kind_ == PerturbationKind::tabulated) {
            if (values_.cols() != p) throw Error(ErrorKind::dimension, "tabulated perturbation width != p");
            spline_eval(t, out);
            return;
        }
        if (direction_.size() != 0 && direction_.size() != p) {
            throw Error(ErrorKind::dimension, "perturbation direction width != p");
        }
        const double w = waveform(t);
        for (Eigen::Index i = 0; i < p; ++i) out(i) = direction_.size() == 0 ? w : w * direction_(i);
    }

    Vec operator()(double t, Eigen::Index p) const {
        Vec out(p);
        evaluate_into(t, out);
        return out;
    }

private:
    static Perturbation builtin(PerturbationKind kind, std::vector<double> params) {
        for (double v : params) {
            if (!std::isfinite(v)) throw Error(ErrorKind::config, "perturbation parameters must be finite");
        }
        Perturbation xi;
        xi.kind_ = kind;
        xi.params_ = std::move(params);
        return xi;
    }

    static Mat spline_second_derivatives(const std::vector<double>& t, const Mat& y) {
        const auto m = static_cast<Eigen::Index>(t.size());
        Mat second = Mat::Zero(m, y.cols());
        if (m < 3) return second;
        // Natural spline: tridiagonal system for interior second derivatives.
        const Eigen::Index k = m - 2;
        Mat tri = Mat::Zero(k, k);
        Mat rhs(k, y.cols());
        for (Eigen::Index i = 1; i <= k; ++i) {
            const double h0 = t[i] - t[i - 1];
            const double h1 = t[i + 1] - t[i];
            tri(i - 1, i - 1) = (h0 + h1) / 3.0;
            if (i > 1) tri(i - 1, i - 2) = h0 / 6.0;
            if (i < k) tri(i - 1, i) = h1 / 6.0;
            rhs.row(i - 1) = (y.row(i + 1) - y.row(i)) / h1 - (y.row(i) - y.row(i - 1)) / h0;
        }
        second.middleRows(1, k) = tri.partialPivLu().solve(rhs);
        return second;
    }

    void spline_eval(double t, Eigen::Ref<Vec> out) const {
        if (t <= times_.front()) {
            out = values_.row(0).transpose();
            return;
        }
        if (t >= times_.back()) {
            out = values_.row(values_.rows() - 1).transpose();
            return;
        }
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto hi = static_cast<Eigen::Index>(it - times_.begin());
        const Eigen::Index lo = hi - 1;
        const double h = times_[hi] - times_[lo];
        const double a = (times_[hi] - t) / h;
        const double b = (t - times_[lo]) / h;
        for (Eigen::Index c = 0; c < out.size(); ++c) {
            out(c) = a * values_(lo, c) + b * values_(hi, c) +
                     ((a * a * a - a) * second_(lo, c) + (b * b * b - b) * second_(hi, c)) * h * h / 6.0;
        }
    }

    PerturbationKind kind_ = PerturbationKind::none;
    std::vector<double> params_;
    Vec direction_;
    std::vector<double> times_;
    Mat values_;
    Mat second_;
};

/// Kernel e^{A(h - s_j)} B at the Gauss nodes s_j of [0, h].
struct QuadratureKernel {
    std::vector<double> offsets;
    std::vector<double> weights;
    std::vector<Mat> kernels;
};

inline constexpr std::size_t perturbation_nodes = 32;
inline constexpr std::size_t perturbation_check_nodes = 64;

/**
 * Exact ZOH data of a plant for a fixed timestep h:
 * x_{k+1} = e^{Ah} x_k + B* (u_eq + u_s) + p_k, with B* = Psi B.
 *
 * Derived quantities used by the controllers are cached here; every member is
 * fixed at construction.
 */
class SampledPlant {
public:
    SampledPlant(Plant plant, double h) : plant_(std::move(plant)), h_(h) {
        if (!(h_ > 0.0) || !std::isfinite(h_)) throw Error(ErrorKind::domain, "h must be positive");
        const Mat& a = plant_.A();
        const Mat& b = plant_.B();
        const Mat& c = plant_.C();
        const Eigen::Index n = plant_.n();
        e_ah_ = expm(a, h_);
        psi_ = smclab::psi(a, h_);
        a_psi_ = a * psi_;
        b_star_ = psi_ * b;
        cb_star_ = c * b_star_;
        cb_star_beta_ = spectral_bounds(cb_star_).min_sym_eig;
        ca_ = c * a;
        pi_b_a_ = b * plant_.CB_inverse() * ca_;
        try {
            cb_star_inv_ = inverse(cb_star_, "CB*", ErrorKind::timestep);
        } catch (const Error&) {
            cb_star_inv_.reset();
        }
        if (static_cast<std::size_t>(plant_.p()) <= max_p_matrix_dim) cb_star_is_p_ = is_p_matrix(cb_star_);
        try {
            const Mat w = Mat::Identity(n, n) + psi_ * pi_b_a_;
            implicit_resolvent_ = inverse(w, "W = I + Psi Pi_B A", ErrorKind::timestep) * e_ah_;
        } catch (const Error&) {
            implicit_resolvent_.reset();
        }
        kernel32_ = make_kernel(perturbation_nodes);
        kernel64_ = make_kernel(perturbation_check_nodes);
    }

    const Plant& plant() const noexcept { return plant_; }
    double h() const noexcept { return h_; }
    const Mat& e_Ah() const noexcept { return e_ah_; }
    const Mat& psi() const noexcept { return psi_; }
    /// A Psi = e^{Ah} - I without the cancellation of forming the difference.
    const Mat& a_psi() const noexcept { return a_psi_; }
    const Mat& b_star() const noexcept { return b_star_; }
    const Mat& cb_star() const noexcept { return cb_star_; }
    double cb_star_beta() const noexcept { return cb_star_beta_; }
    const Mat& ca() const noexcept { return ca_; }
    /// Pi_B A = B (CB)^{-1} C A.
    const Mat& pi_b_a() const noexcept { return pi_b_a_; }
    bool cb_star_is_p() const noexcept { return cb_star_is_p_; }

    const Mat& cb_star_inverse() const {
        if (!cb_star_inv_) throw Error(ErrorKind::timestep, "CB* is singular at h = " + std::to_string(h_));
        return *cb_star_inv_;
    }

    /// W^{-1} e^{Ah}, the one-step map of the implicit equivalent control.
    const Mat& implicit_resolvent() const {
        if (!implicit_resolvent_) {
            throw Error(ErrorKind::timestep, "W = I + Psi Pi_B A is singular; timestep too large");
        }
        return *implicit_resolvent_;
    }

    const QuadratureKernel& kernel(std::size_t nodes) const {
        return nodes == perturbation_check_nodes ? kernel64_ : kernel32_;
    }

private:
    QuadratureKernel make_kernel(std::size_t nodes) const {
        const GaussRule rule = gauss_legendre(nodes);
        QuadratureKernel k;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double s = 0.5 * h_ * (1.0 + rule.nodes[j]);
            k.offsets.push_back(s);
            k.weights.push_back(0.5 * h_ * rule.weights[j]);
            k.kernels.push_back(expm(plant_.A(), h_ - s) * plant_.B());
        }
        return k;
    }

    Plant plant_;
    double h_;
    Mat e_ah_;
    Mat psi_;
    Mat a_psi_;
    Mat b_star_;
    Mat cb_star_;
    double cb_star_beta_ = 0.0;
    Mat ca_;
    Mat pi_b_a_;
    std::optional<Mat> cb_star_inv_;
    std::optional<Mat> implicit_resolvent_;
    bool cb_star_is_p_ = false;
    QuadratureKernel kernel32_;
    QuadratureKernel kernel64_;
};

inline SampledPlant sample(const Plant& plant, double h) { return SampledPlant(plant, h); }

/**
 * Largest grid point h = h_max j / grid such that CB*_s / h stays positive
 * definite at every grid point up to it. Returns 0 when even the first point
 * fails.
 */
inline double h_star_estimate(const Plant& plant, double h_max, std::size_t grid = 200) {
    if (spectral_bounds(plant.CB()).min_sym_eig <= 0.0) {
        throw Error(ErrorKind::precondition, "h* needs CB positive definite");
    }
    if (!(h_max > 0.0) || grid == 0) throw Error(ErrorKind::domain, "h_max and grid must be positive");
    double best = 0.0;
    for (std::size_t j = 1; j <= grid; ++j) {
        const double h = h_max * static_cast<double>(j) / static_cast<double>(grid);
        const Mat cb_star = plant.C() * psi(plant.A(), h) * plant.B();
        if (!(spectral_bounds(cb_star / h).min_sym_eig > 0.0)) break;
        best = h;
    }
    return best;
}

namespace detail {

// Accumulates int over [t_k, t_k + h] of kernel(s) xi(t_k + s) ds into out;
// returns the same quadrature applied to |integrand| (scale for error checks).
inline double accumulate_perturbation(const QuadratureKernel& k, const Perturbation& xi, double t_k,
                                      Eigen::Ref<Vec> out, Vec& xi_buf) {
    out.setZero();
    double scale = 0.0;
    const Eigen::Index n = out.size();
    const Eigen::Index p = xi_buf.size();
    for (std::size_t j = 0; j < k.kernels.size(); ++j) {
        xi.evaluate_into(t_k + k.offsets[j], xi_buf);
        const Mat& kj = k.kernels[j];
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 0.0;
            for (Eigen::Index l = 0; l < p; ++l) v += kj(i, l) * xi_buf(l);
            out(i) += k.weights[j] * v;
            scale += k.weights[j] * std::abs(v);
        }
    }
    return scale;
}

} // namespace detail

/// Relative disagreement between the 32- and 64-node rules that is reported as an accuracy error.
inline constexpr double perturbation_refinement_tol = 1e-6;

/**
 * p_k = int_{t_k}^{t_k + h} e^{A(t_k + h - tau)} B xi(tau) dtau.
 *
 * 32-node Gauss-Legendre, checked once against the 64-node rule.
 */
inline Vec perturbation_integral(const SampledPlant& sp, const Perturbation& xi, double t_k) {
    const Eigen::Index n = sp.plant().n();
    Vec out = Vec::Zero(n);
    if (xi.is_zero()) return out;
    Vec xi_buf(sp.plant().p());
    Vec check(n);
    detail::accumulate_perturbation(sp.kernel(perturbation_nodes), xi, t_k, out, xi_buf);
    const double scale = detail::accumulate_perturbation(sp.kernel(perturbation_check_nodes), xi, t_k, check, xi_buf);
    const double diff = (out - check).cwiseAbs().maxCoeff();
    if (diff > perturbation_refinement_tol * scale) {
        throw Error(ErrorKind::accuracy, "perturbation quadrature refinement disagrees at t = " + std::to_string(t_k));
    }
    return out;
}

} // namespace smclab
