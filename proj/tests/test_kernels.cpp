#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "btp/errors.hpp"
#include "btp/kernels.hpp"
#include "oracle_values.hpp"

using namespace btp;

TEST(Btbm, DiagonalAnchorInD1) {
    for (double t : {0.1, 1.0, 10.0}) {
        const double v = btbm_density_r2(t, 0.0, 1) * std::pow(t, 0.25);
        EXPECT_NEAR(v / oracle::kBtbmAnchor, 1.0, 1e-9) << "t=" << t;
    }
}

TEST(Btbm, OffDiagonalOracles) {
    const SpacePoint o1{0.0}, x1{0.5};
    EXPECT_NEAR(btbm_density(1.0, o1, x1) / oracle::kBtbmD1R05, 1.0, 1e-8);
    const SpacePoint o2{0.0, 0.0}, x2{0.6, 0.8};
    EXPECT_NEAR(btbm_density(1.0, o2, x2) / oracle::kBtbmD2R1, 1.0, 1e-8);
    const SpacePoint o3{0.0, 0.0, 0.0}, x3{0.0, 1.0, 0.0};
    EXPECT_NEAR(btbm_density(2.0, o3, x3) / oracle::kBtbmD3R1T2, 1.0, 1e-8);
}

TEST(Btbm, DiagonalIsInfiniteFromD2) {
    EXPECT_TRUE(std::isinf(btbm_density_r2(1.0, 0.0, 2)));
    EXPECT_TRUE(std::isinf(btbm_density_r2(1.0, 0.0, 3)));
}

TEST(Btbm, UnitMass) {
    for (int d = 1; d <= 3; ++d)
        for (double t : {0.3, 1.0, 4.0}) EXPECT_NEAR(btbm_mass(t, d), 1.0, 1e-7) << "d=" << d << " t=" << t;
}

TEST(Btbm, ScalingProperty) {
    // K_{lambda t}(lambda^{1/4} x) = lambda^{-d/4} K_t(x)
    for (int d = 1; d <= 3; ++d)
        for (double lam : {0.01, 3.0, 50.0}) {
            const double r2 = 0.49;
            const double lhs = btbm_density_r2(lam, std::sqrt(lam) * r2, d);
            const double rhs = std::pow(lam, -0.25 * d) * btbm_density_r2(1.0, r2, d);
            EXPECT_NEAR(lhs / rhs, 1.0, 1e-8);
        }
}

TEST(Btbm, SymmetricAndRadial) {
    const SpacePoint a{0.3, -0.2}, b{-0.1, 0.4};
    EXPECT_DOUBLE_EQ(btbm_density(0.7, a, b), btbm_density(0.7, b, a));
    EXPECT_NEAR(btbm_density(0.7, a, b), btbm_density_r2(0.7, 0.16 + 0.36, 2), 1e-15);
}

TEST(Btbm, TimeDerivativeMatchesFiniteDifference) {
    for (int d = 1; d <= 3; ++d) {
        const double t = 0.8, r2 = 0.3, h = 1e-5;
        const double fd = (btbm_density_r2(t + h, r2, d) - btbm_density_r2(t - h, r2, d)) / (2 * h);
        EXPECT_NEAR(btbm_density_dt_r2(t, r2, d), fd, 1e-6 * std::abs(fd) + 1e-9);
    }
}

TEST(Btbm2, OriginOracles) {
    EXPECT_NEAR(btbm2_density(1.0, 2.0, 1) / oracle::kBtbm2D1U1V2, 1.0, 1e-8);
    EXPECT_NEAR(btbm2_density(2.0, 1.0, 1) / oracle::kBtbm2D1U1V2, 1.0, 1e-8);
    EXPECT_NEAR(btbm2_density(1.0, 1.0, 2) / oracle::kBtbm2D2U1V1, 1.0, 1e-8);
    EXPECT_NEAR(btbm2_density(1.0, 3.0, 3) / oracle::kBtbm2D3U1V3, 1.0, 1e-8);
}

TEST(Btbm2, EqualTimesGiveTheL2Norm) {
    // int K_t(x)^2 dx = K2_{t,t}(0)
    EXPECT_NEAR(btbm2_density(1.0, 1.0, 1) / oracle::kL2D1, 1.0, 1e-8);
    EXPECT_NEAR(btbm2_density(1.0, 1.0, 3) / oracle::kL2D3, 1.0, 1e-8);
}

TEST(Btbm2, OffsetValueIsConsistentWithConvolution) {
    // K2_{u,v}(z) = int K_u(x) K_v(z - x) dx in d = 1
    const double u = 0.5, v = 1.5, z = 0.7;
    QuadratureSpec q;
    const double conv = integrate(
        [&](double x) {
            const SpacePoint o{0.0}, a{x}, b{z - x};
            return btbm_density(u, o, a, q) * btbm_density(v, o, b, q);
        },
        -12.0, 12.0, q);
    EXPECT_NEAR(btbm2_density(u, v, 1, q, z * z) / conv, 1.0, 1e-6);
}

TEST(Kernels, DomainErrors) {
    EXPECT_THROW(btbm_density_r2(0.0, 1.0, 1), DomainError);
    EXPECT_THROW(btbm_density_r2(-1.0, 1.0, 1), DomainError);
    EXPECT_THROW(btbm_density_r2(1.0, 1.0, 0), DomainError);
    const SpacePoint a{0.0}, b{0.0, 1.0};
    EXPECT_THROW(btbm_density(1.0, a, b), DomainError);
}

TEST(Bm, HeatKernel) {
    const SpacePoint o{0.0}, x{1.0};
    EXPECT_NEAR(bm_kernel(2.0, o, x), std::exp(-0.25) / std::sqrt(4.0 * M_PI), 1e-15);
    EXPECT_NEAR(bm_time_weight(1.0, 0.0), 1.0 / std::sqrt(2.0 * M_PI), 1e-15);
}
