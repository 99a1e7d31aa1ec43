#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "smclab/experiments.hpp"
#include "smclab/metrics.hpp"

using namespace smclab;

TEST(FitOrder, RecoversExactPowerLaws) {
    const std::vector<double> hs = log_space_descending(1e-1, 1e-4, 10);
    for (int m : {1, 2, 3}) {
        std::vector<double> e;
        for (double h : hs) e.push_back(3.5 * std::pow(h, m));
        const OrderFit fit = fit_order(hs, e);
        EXPECT_NEAR(fit.slope, m, 1e-9);
        EXPECT_NEAR(fit.intercept, std::log(3.5), 1e-8);
        EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    }
}

TEST(FitOrder, DropsPointsAtOrBelowTheFloor) {
    const std::vector<double> hs = log_space_descending(1e-1, 1e-5, 9);
    std::vector<double> e;
    for (double h : hs) e.push_back(std::max(h * h, 1e-9));
    const OrderFit fit = fit_order(hs, e, 2e-6);
    EXPECT_EQ(fit.hs.size(), 4u);
    EXPECT_NEAR(fit.slope, 2.0, 1e-9);
    EXPECT_EQ(fit_order(hs, e, 1e-9).hs.size(), 8u);
    EXPECT_THROW(fit_order(hs, e, 1e-4), Error);
}

TEST(FitOrder, InputErrors) {
    try {
        fit_order({0.1, 0.05, 0.02}, {1.0, 0.5, 0.2});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::fit);
    }
    EXPECT_THROW(fit_order({0.1, 0.2, 0.05, 0.01}, {1, 1, 1, 1}), Error);
    EXPECT_THROW(fit_order({0.1, 0.05}, {1.0}), Error);
    EXPECT_THROW(log_space_descending(1e-4, 1e-2, 5), Error);
}

TEST(VariationSmooth, SineOverWholePeriods) {
    EXPECT_NEAR(variation_smooth(Perturbation::sine(1.0, 1.0), 0.0, 2.0 * std::numbers::pi, 1), 4.0, 1e-12);
    EXPECT_NEAR(variation_smooth(gain_study_perturbation(), 0.0, 2.0 * std::numbers::pi, 1), 3.6, 1e-12);
    EXPECT_NEAR(variation_smooth(saturation_sweep_perturbation(), 0.0, 1.0, 1), 8.0, 1e-11);
    EXPECT_NEAR(variation_smooth(Perturbation::sine(1.0, 1.0), 0.0, 2.0 * std::numbers::pi, 2), 4.0 * std::sqrt(2.0),
                1e-12);
}

TEST(VariationSmooth, ConstantAndNone) {
    EXPECT_EQ(variation_smooth(Perturbation::constant(2.0), 0.0, 5.0, 1), 0.0);
    EXPECT_EQ(variation_smooth(Perturbation::none(), 0.0, 5.0, 1), 0.0);
}

TEST(VariationSmooth, DecayingSineMatchesTrapezoidOracle) {
    const Perturbation xi = fig_matrix_perturbation();
    const auto d = [](double t) {
        const double w = 2.0 * std::numbers::pi;
        const double env = t < 6.0 ? 1.0 : std::exp(6.0 - t);
        const double denv = t < 6.0 ? 0.0 : -std::exp(6.0 - t);
        return 0.6 * (denv * std::sin(w * t) + env * w * std::cos(w * t));
    };
    const double ref = oracle::trapezoid_abs(d, 0.0, 12.0, 2'400'000);
    EXPECT_NEAR(variation_smooth(xi, 0.0, 12.0, 1), ref, 1e-7 * ref);
}

TEST(VariationSmooth, TabulatedIsACapabilityError) {
    Mat v(2, 1);
    v << 0.0, 1.0;
    try {
        variation_smooth(Perturbation::tabulated({0.0, 1.0}, v), 0.0, 1.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::capability);
    }
}

TEST(VariationStep, ApproachesSmoothAndIgnoresRepeats) {
    std::vector<Vec> samples, doubled;
    for (int k = 0; k <= 4000; ++k) {
        const Vec v = Vec::Constant(1, std::sin(2.0 * std::numbers::pi * k / 4000.0));
        samples.push_back(v);
        doubled.push_back(v);
        doubled.push_back(v);
    }
    EXPECT_NEAR(variation_step(samples), 4.0, 1e-12);
    EXPECT_EQ(variation_step(samples), variation_step(doubled));
    EXPECT_EQ(variation_step({}), 0.0);
}

TEST(Chatter, NominalImplicitRunIsQuiet) {
    const ScenarioConfig cfg{.plant = Benchmark2D::plant(), .h = 0.1, .t_end = 150.0, .x0 = Benchmark2D::x0()};
    const Trace tr = run(cfg);
    const ChatterIndices ci = chatter_indices(tr, 20.0);
    EXPECT_LE(ci.c1, 1e-9);
    EXPECT_LE(ci.c2, 1e-9);
    EXPECT_EQ(tr.times[window_start(tr, 20.0)], 130.0);
    EXPECT_THROW(chatter_indices(tr, 0.0), Error);
    EXPECT_THROW(chatter_indices(tr, 200.0), Error);
}

TEST(Chatter, ExplicitSignChattersAtFullAmplitude) {
    const ScenarioConfig cfg{.plant = Benchmark2D::plant(), .h = 0.1, .t_end = 50.0, .x0 = Benchmark2D::x0(),
                             .us_law = UsLaw::explicit_sign()};
    const ChatterIndices ci = chatter_indices(run(cfg), 20.0);
    // u_s flips between +-1 every step once on the manifold
    EXPECT_GT(ci.c2, 1.5 * 200.0);
    EXPECT_GT(ci.c1, 0.0);
}

TEST(UsSupDistance, IdenticalAndRefined) {
    ScenarioConfig cfg{.plant = Benchmark2D::plant(), .h = 0.1, .t_end = 5.0, .x0 = Benchmark2D::x0(),
                       .perturbation = gain_study_perturbation()};
    const Trace ref = continuous_reference(cfg, 1);
    EXPECT_EQ(us_sup_distance(ref, ref), 0.0);
    const Trace fine = continuous_reference(cfg, 8);
    // held samples of -0.9 sin t differ from the fine grid by at most 0.9 h
    const double d = us_sup_distance(ref, fine);
    EXPECT_GT(d, 0.5 * 0.9 * 0.1);
    EXPECT_LE(d, 0.9 * 0.1);
    cfg.h = 0.03;
    try {
        us_sup_distance(ref, continuous_reference(cfg, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::alignment);
    }
}

TEST(Lyapunov, QuadraticForm) {
    Mat m(2, 2);
    m << 2.0, 0.0, 0.0, 4.0;
    Vec s(2);
    s << 1.0, 2.0;
    EXPECT_NEAR(quadratic_lyapunov(m, s), 0.5 + 1.0, 1e-15);
}

TEST(Lyapunov, SignSequenceStartsAtAlphaL1) {
    Mat m(2, 2);
    m << 0.3, 0.1, -0.1, 0.2;
    Vec s(2);
    s << 1.0, -0.5;
    const SlidingRecursion rec = run_sliding_recursion(m, s, 1.0, 10);
    const std::vector<double> v = sign_lyapunov_sequence(rec, 1.0);
    EXPECT_EQ(v.size(), 11u);
    EXPECT_DOUBLE_EQ(v.front(), 1.5);
    for (std::size_t k = 1; k < v.size(); ++k) EXPECT_LE(v[k], v[k - 1] + 1e-15);
    EXPECT_NEAR(v.back(), 0.0, 1e-15);
}

TEST(SeedNearManifold, HitsTheRequestedSigma) {
    const Plant pl = Benchmark2D::plant();
    const Vec x = seed_near_manifold(pl, Benchmark2D::x0(), Vec::Constant(1, 0.25));
    EXPECT_NEAR((pl.C() * x)(0), 0.25, 1e-14);
}

namespace {

// |sigma_{k+1}| after one closed-loop step from a state with sigma_k = h^2.
double one_step_sigma(double h, EqLaw eq, UsLaw us) {
    const Plant pl = Benchmark2D::plant();
    const SampledPlant sp = sample(pl, h);
    const Vec x = seed_near_manifold(pl, Benchmark2D::x0(), Vec::Constant(1, h * h));
    const ControlStep st = control_step(sp, eq, us, x);
    const Vec next = sp.e_Ah() * x + sp.b_star() * (st.u_eq + st.u_s);
    return std::abs((pl.C() * next)(0));
}

double near_manifold_order(EqLaw eq, UsLaw us) {
    const std::vector<double> hs = log_space_descending(1e-2, 2e-4, 8);
    std::vector<double> e;
    for (double h : hs) e.push_back(one_step_sigma(h, eq, us));
    return fit_order(hs, e, 1e-11).slope;
}

} // namespace

TEST(NearManifold, ImplicitUsExposesEquivalentLawOrder) {
    EXPECT_NEAR(near_manifold_order(EqLaw::explicit_, UsLaw::implicit_avi()), 2.0, 0.15);
    EXPECT_NEAR(near_manifold_order(EqLaw::implicit, UsLaw::implicit_avi()), 2.0, 0.15);
    EXPECT_NEAR(near_manifold_order(EqLaw::midpoint, UsLaw::implicit_avi()), 3.0, 0.15);
    EXPECT_LE(one_step_sigma(1e-2, EqLaw::exact, UsLaw::implicit_avi()), 1e-13);
}

TEST(NearManifold, ExplicitUsIsFirstOrder) {
    EXPECT_NEAR(near_manifold_order(EqLaw::exact, UsLaw::explicit_sign()), 1.0, 0.15);
}

TEST(OneStepError, ExplicitPlusImplicitCancelsLeadingTerm) {
    const std::vector<double> hs = log_space_descending(1e-2, 1e-4, 8);
    std::vector<double> e;
    for (double h : hs) {
        const SampledPlant sp = sample(Benchmark2D::plant(), h);
        const Vec x = Benchmark2D::x0();
        e.push_back((one_step_sigma_delta(sp, EqLaw::explicit_, x) + one_step_sigma_delta(sp, EqLaw::implicit, x)).norm());
    }
    EXPECT_GE(fit_order(hs, e, 1e-11).slope, 2.85);
}

TEST(OneStepError, FloorScalesWithTheCancellingTerms) {
    const SampledPlant sp = sample(Benchmark2D::plant(), 1e-3);
    const double fl = one_step_measurement_floor(sp, EqLaw::exact, Benchmark2D::x0());
    EXPECT_GT(fl, 0.0);
    EXPECT_LE(one_step_sigma_error(sp, EqLaw::exact, Benchmark2D::x0()), 10.0 * fl);
}

TEST(VariationStep, ScalarTent) {
    EXPECT_EQ(variation_step({Vec::Constant(1, 0.0), Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)}), 2.0);
    EXPECT_EQ(variation_step({Vec::Constant(2, 3.0), Vec::Constant(2, 3.0)}), 0.0);
}

TEST(Chatter, ExplicitSignBandShrinksLinearlyInH) {
    // Sum of |sigma_k| over a fixed window holds ~window/h samples of size O(h),
    // so the linear scaling shows in the per-sample mean h * C1 / window.
    double mean[2];
    int i = 0;
    for (double h : {0.03, 0.003}) {
        const ScenarioConfig cfg{.plant = Benchmark2D::plant(), .h = h, .t_end = 150.0, .x0 = Benchmark2D::x0(),
                                 .us_law = UsLaw::explicit_sign()};
        const ChatterIndices ci = chatter_indices(run(cfg), 20.0);
        EXPECT_GT(ci.c1, 0.0);
        mean[i++] = h * ci.c1 / 20.0;
    }
    EXPECT_GT(mean[0] / mean[1], 5.0);
    EXPECT_LT(mean[0] / mean[1], 20.0);
}

TEST(Chatter, PerturbedImplicitIndicesIgnoreTheGain) {
    std::vector<ChatterIndices> out;
    for (double alpha : {1.0, 3.0, 10.0}) {
        const ScenarioConfig cfg{.plant = Benchmark2D::plant(alpha), .h = 0.1, .t_end = 150.0, .x0 = Benchmark2D::x0(),
                                 .perturbation = gain_study_perturbation()};
        out.push_back(chatter_indices(run(cfg), 20.0));
    }
    EXPECT_GT(out[0].c1, 0.0);
    for (const ChatterIndices& ci : out) {
        EXPECT_NEAR(ci.c1, out[0].c1, 1e-9 * out[0].c1);
        EXPECT_NEAR(ci.c2, out[0].c2, 1e-9 * out[0].c2);
    }
}

TEST(UsSupDistance, NominalRunAfterReachingIsZero) {
    const ScenarioConfig cfg{.plant = Benchmark2D::plant(), .h = 0.1, .t_end = 30.0, .x0 = Benchmark2D::x0()};
    const Trace tr = run(cfg);
    ASSERT_TRUE(tr.reaching_step.has_value());
    const Trace ref = continuous_reference(cfg, 4);
    EXPECT_LE(us_sup_distance(tr, ref, 0.1 * static_cast<double>(*tr.reaching_step + 1)), 1e-12);
    EXPECT_EQ(us_sup_distance(tr, ref, 0.0), 1.0);
}

TEST(NearManifold, NegativeSeedGivesTheSameOrders) {
    const Plant pl = Benchmark2D::plant();
    const std::vector<double> hs = log_space_descending(1e-2, 2e-4, 8);
    std::vector<double> exp_us, imp_us;
    for (double h : hs) {
        const SampledPlant sp = sample(pl, h);
        const Vec x = seed_near_manifold(pl, Benchmark2D::x0(), Vec::Constant(1, -h * h));
        for (auto [eq, us, out] : {std::tuple{EqLaw::exact, UsLaw::explicit_sign(), &exp_us},
                                   std::tuple{EqLaw::explicit_, UsLaw::implicit_avi(), &imp_us}}) {
            const ControlStep st = control_step(sp, eq, us, x);
            out->push_back(std::abs((pl.C() * (sp.e_Ah() * x + sp.b_star() * (st.u_eq + st.u_s)))(0)));
        }
    }
    EXPECT_NEAR(fit_order(hs, exp_us, 1e-11).slope, 1.0, 0.15);
    EXPECT_NEAR(fit_order(hs, imp_us, 1e-11).slope, 2.0, 0.15);
}
