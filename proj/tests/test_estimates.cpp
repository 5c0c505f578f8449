#include <gtest/gtest.h>

#include <cmath>

#include "btp/checks.hpp"
#include "btp/errors.hpp"
#include "btp/estimates.hpp"
#include "oracle_values.hpp"

using namespace btp;

TEST(FitLogLog, RecoversPowerLaw) {
    std::vector<double> x, y;
    for (int i = 0; i < 8; ++i) {
        x.push_back(std::pow(2.0, -i));
        y.push_back(3.0 * std::pow(x.back(), 0.7));
    }
    const auto f = fit_loglog(x, y);
    EXPECT_NEAR(f.slope, 0.7, 1e-12);
    EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
    EXPECT_NEAR(f.slope_stderr, 0.0, 1e-10);
}

TEST(L2Norm, MatchesOracleAndPublishedConstants) {
    const double oracles[3] = {oracle::kL2D1, oracle::kL2D2, oracle::kL2D3};
    for (int d = 1; d <= 3; ++d) {
        const double v = l2_kernel_norm(1.0, d);
        EXPECT_NEAR(v / oracles[d - 1], 1.0, 1e-8);
        EXPECT_NEAR(v, kPublishedL2[d - 1], 2e-3);
    }
}

TEST(L2Norm, ExactScaling) {
    for (int d = 1; d <= 3; ++d) {
        const double ref = l2_kernel_norm(1.0, d);
        for (double t : {0.01, 0.3, 7.0, 100.0}) EXPECT_NEAR(l2_kernel_norm(t, d) * std::pow(t, 0.25 * d) / ref, 1.0, 1e-9);
    }
}

TEST(L2Norm, LatticeApproachesContinuum) {
    // sum_x K^BTRW(x)^2 / delta -> int K^2
    double prev = 1.0;
    for (double delta : {0.5, 0.25, 0.125}) {
        const double err = std::abs(l2_kernel_norm(1.0, 1, KernelMode::lattice(delta)) / delta / oracle::kL2D1 - 1.0);
        EXPECT_LT(err, prev);
        prev = err;
    }
}

TEST(TemporalDifference, EdgeCases) {
    EXPECT_EQ(temporal_difference_integral(1.0, 1.0, 1), 0.0);
    EXPECT_THROW(temporal_difference_integral(1.5, 1.0, 1), DomainError);
    EXPECT_THROW(temporal_difference_integral(-0.1, 1.0, 1), DomainError);
    EXPECT_GT(temporal_difference_integral(0.9, 1.0, 2), 0.0);
}

TEST(TemporalDifference, ZeroStartIsTheFullNorm) {
    // r = 0: int_0^t ||K_s||^2 ds = C_d t^{1-d/4} / (1 - d/4)
    for (int d = 1; d <= 3; ++d) {
        const double cd = l2_kernel_norm(1.0, d);
        EXPECT_NEAR(temporal_difference_integral(0.0, 2.0, d) / (cd * std::pow(2.0, 1.0 - 0.25 * d) / (1.0 - 0.25 * d)), 1.0, 1e-7);
    }
}

TEST(TemporalDifference, ExponentInEachDimension) {
    for (int d = 1; d <= 3; ++d) {
        const auto c = check_temporal(d);
        EXPECT_NEAR(c.report.fit->slope, (4.0 - d) / 4.0, 0.01) << "d=" << d;
        EXPECT_TRUE(c.report.passed());
    }
}

TEST(TemporalDifference, LatticeIdentityMatchesDirectSum) {
    QuadratureSpec q;
    q.rel_tol = 1e-10;
    const double via = temporal_difference_integral(0.6, 0.8, 1, KernelMode::lattice(0.5), q);
    const double direct = temporal_difference_direct(0.6, 0.8, 0.5, 1, q);
    EXPECT_NEAR(via / direct, 1.0, 1e-8);
}

TEST(SpatialDifference, QuadraticAtSmallOffsetInD1) {
    const std::vector<double> z1{1e-3}, z2{2e-3};
    const double a = spatial_difference_integral(z1, 1.0), b = spatial_difference_integral(z2, 1.0);
    EXPECT_NEAR(b / a, 4.0, 0.05);
    const std::vector<double> zero{0.0};
    EXPECT_EQ(spatial_difference_integral(zero, 1.0), 0.0);
}

TEST(SpatialDifference, MatchesFourierOracle) {
    const std::vector<double> z{0.1};
    EXPECT_NEAR(spatial_difference_integral(z, 1.0) / oracle::kSpatialD1Z01T1, 1.0, 1e-6);
}

TEST(SpatialDifference, SaturatesAtLargeOffset) {
    // for |z| -> infinity the two kernels stop overlapping: value -> 2 int_0^t ||K_s||^2 ds
    const std::vector<double> z{40.0};
    const double full = 2.0 * temporal_difference_integral(0.0, 1.0, 1);
    EXPECT_NEAR(spatial_difference_integral(z, 1.0) / full, 1.0, 1e-3);
}

TEST(SpatialDifference, LatticeNeedsLatticeOffset) {
    const std::vector<double> z{0.3};
    EXPECT_THROW(spatial_difference_integral(z, 1.0, KernelMode::lattice(0.25)), DomainError);
}

TEST(Dde, KernelIsASolution) {
    const auto u0 = LatticeField::indicator(make_lattice(0.25, 1, 0.25));
    for (double t : {0.5, 1.0, 2.0}) EXPECT_LT(dde_residual(t, u0), 1e-6);
}

TEST(Dde, ContinuousGaussianData) {
    const std::vector<double> xs{-1.0, 0.0, 0.5, 2.0};
    EXPECT_LT(dde_residual_gaussian(1.0, 0.5, xs), 1e-6);
}

TEST(Asymptotic, DeviationDecreases) {
    const auto c = check_asymptotic();
    EXPECT_TRUE(c.report.passed());
    EXPECT_LT(c.report.values.back(), 0.05);
}

TEST(Isometry, AgreesWithTimeIntegralOfKernelNorm) {
    // interior site of a wide block: sum_y int K_s(x, y)^2 ds / delta ~ int_0^t C_d s^{-1/4} ds
    const auto spec = make_lattice(0.125, 1, 6.0);
    const std::vector<long> x{0};
    const double v = isometry_variance(1.0, x, spec);
    const double cont = oracle::kL2D1 / 0.75;
    EXPECT_NEAR(v / cont, 1.0, 0.05);
    EXPECT_THROW(isometry_variance(1.0, std::vector<long>{100}, spec), DomainError);
}

TEST(EstimateReport, Criteria) {
    EstimateReport r;
    r.values = {3.0, 2.0, 1.0};
    r.criterion = Criterion::decreasing;
    EXPECT_TRUE(r.passed());
    r.criterion = Criterion::bounded_ratio;
    r.tolerance = 2.5;
    EXPECT_TRUE(r.passed());
    r.tolerance = 1.5;
    EXPECT_FALSE(r.passed());
    r.criterion = Criterion::below;
    r.reference = 3.0;
    EXPECT_FALSE(r.passed());
    r.criterion = Criterion::within;
    r.reference = 2.0;
    r.tolerance = 1.0;
    EXPECT_TRUE(r.passed());
    r.values.push_back(std::nan(""));
    EXPECT_FALSE(r.passed());
    r.values.clear();
    EXPECT_FALSE(r.passed());
}

TEST(AlphaChoice, Validation) {
    EXPECT_NO_THROW((AlphaChoice{3, 0.45}.validate()));
    EXPECT_THROW((AlphaChoice{3, 0.6}.validate()), DomainError);
}
