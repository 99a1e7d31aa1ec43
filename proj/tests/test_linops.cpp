#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "smclab/linops.hpp"

using namespace smclab;

namespace {

Mat benchmark_a() {
    Mat a(2, 2);
    a << 0.0, 1.0, 19.0, -2.0;
    return a;
}

} // namespace

TEST(Expm, MatchesClosedFormOnBenchmark) {
    for (double t : {0.0, 0.03, 0.3, 1.0, 2.5}) {
        const Mat got = expm(benchmark_a(), t);
        const Mat want = oracle::benchmark_expm(t);
        EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, want.cwiseAbs().maxCoeff())) << "t=" << t;
    }
}

TEST(Expm, MatchesTaylorOracleOnRandomMatrices) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        Mat m(4, 4);
        for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = u(rng);
        const Mat want = oracle::taylor_expm(m * 0.7);
        EXPECT_LE((expm(m, 0.7) - want).cwiseAbs().maxCoeff(), 1e-11 * want.cwiseAbs().maxCoeff());
    }
}

TEST(Psi, AgreesWithSeriesAndSimpsonOracle) {
    for (double h : {1e-4, 0.03, 0.3, 1.0}) {
        const Mat got = psi(benchmark_a(), h);
        const Mat series = psi_series(benchmark_a(), h);
        const Mat simpson = oracle::simpson_psi(benchmark_a(), h);
        EXPECT_LE((got - series).cwiseAbs().maxCoeff(), 1e-12 * got.cwiseAbs().maxCoeff()) << "h=" << h;
        EXPECT_LE((got - simpson).cwiseAbs().maxCoeff(), 1e-10 * got.cwiseAbs().maxCoeff()) << "h=" << h;
    }
}

TEST(Psi, SatisfiesAPsiEqualsExpMinusIdentity) {
    const Mat a = benchmark_a();
    const double h = 0.3;
    const Mat lhs = a * psi(a, h);
    const Mat rhs = expm(a, h) - Mat::Identity(2, 2);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * rhs.cwiseAbs().maxCoeff());
}

TEST(Psi, SingularAUsesIntegralNotInverse) {
    Mat a = Mat::Zero(2, 2);
    a(0, 1) = 1.0; // nilpotent: Psi = h I + h^2/2 A
    const Mat got = psi(a, 0.5);
    Mat want(2, 2);
    want << 0.5, 0.125, 0.0, 0.5;
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Psi, RejectsNonPositiveStep) {
    try {
        psi(benchmark_a(), 0.0);
        FAIL() << "expected a domain error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
    }
    EXPECT_THROW(psi(benchmark_a(), -0.1), Error);
}

TEST(Inverse, RejectsSingularAndNonSquare) {
    Mat s(2, 2);
    s << 1.0, 2.0, 2.0, 4.0;
    try {
        inverse(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::rank);
    }
    EXPECT_THROW(inverse(Mat::Ones(2, 3)), Error);
    Mat ok(2, 2);
    ok << 2.0, 1.0, 1.0, 3.0;
    EXPECT_LE((inverse(ok) * ok - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SpectralBounds, SymmetricPartAndNorm) {
    Mat m(2, 2);
    m << 2.0, 3.0, -1.0, 4.0; // symmetric part [[2,1],[1,4]]: eigenvalues 3 -+ sqrt(2)
    const SpectralBounds b = spectral_bounds(m);
    EXPECT_NEAR(b.min_sym_eig, 3.0 - std::sqrt(2.0), 1e-13);
    EXPECT_NEAR(b.max_sym_eig, 3.0 + std::sqrt(2.0), 1e-13);
    // ||m||_2^2 is the largest eigenvalue of m^T m = [[5,2],[2,25]]
    EXPECT_NEAR(b.spectral_norm, std::sqrt(15.0 + std::sqrt(104.0)), 1e-13);
}

TEST(PMatrix, ClassifiesKnownCases) {
    EXPECT_TRUE(is_p_matrix(Mat::Identity(3, 3)));
    Mat upper(2, 2);
    upper << 1.0, 5.0, 0.0, 1.0; // not positive definite, still P
    EXPECT_TRUE(is_p_matrix(upper));
    Mat swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;
    EXPECT_FALSE(is_p_matrix(swap));
    Mat neg_minor(2, 2);
    neg_minor << 1.0, 2.0, 2.0, 1.0;
    EXPECT_FALSE(is_p_matrix(neg_minor));
    Mat tiny(1, 1);
    tiny << -1e-20;
    EXPECT_FALSE(is_p_matrix(tiny));
}

TEST(PMatrix, AgreesWithOracleOnRandomMatrices) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int positives = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const int p = 1 + trial % 4;
        Mat m(p, p);
        for (int i = 0; i < p * p; ++i) m(i / p, i % p) = u(rng);
        m.diagonal().array() += 0.8;
        const bool want = oracle::is_p_matrix(m);
        positives += want ? 1 : 0;
        EXPECT_EQ(is_p_matrix(m), want);
    }
    EXPECT_GT(positives, 30);
    EXPECT_LT(positives, 290);
}

TEST(PMatrix, EnumerationCapIsACapabilityError) {
    try {
        is_p_matrix(Mat::Identity(13, 13));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::capability);
    }
}

TEST(Projector, IsIdempotentWithKernelC) {
    Mat b(3, 1), c(1, 3);
    b << 0.0, 1.0, 2.0;
    c << 1.0, 1.0, 0.5;
    const Mat pi = projector_pi(b, c);
    EXPECT_LE((pi * pi - pi).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((c * pi).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((pi * b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Projector, BenchmarkSlidingDynamics) {
    Mat b(2, 1), c(1, 2);
    b << 0.0, 1.0;
    c << 1.0, 1.0;
    const Mat pi_a = projector_pi(b, c) * benchmark_a();
    Mat want(2, 2);
    want << 0.0, 1.0, 0.0, -1.0;
    EXPECT_EQ(pi_a, want);
    const Mat phi = state_transition_phi(benchmark_a(), b, c, 1.0);
    EXPECT_NEAR(phi(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(phi(1, 1), std::exp(-1.0), 1e-14);
    EXPECT_NEAR(phi(0, 1), 1.0 - std::exp(-1.0), 1e-14);
}

TEST(Projector, RejectsSingularCB) {
    Mat b(2, 1), c(1, 2);
    b << 1.0, 0.0;
    c << 0.0, 1.0;
    EXPECT_THROW(projector_pi(b, c), Error);
}
