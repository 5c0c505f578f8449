#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "btp/noise.hpp"
#include "btp/parallel.hpp"

using namespace btp;

TEST(Noise, Reproducible) {
    const NoiseSystem a(42, 0.01, 100), b(42, 0.01, 100);
    const std::vector<double> x{0.5};
    EXPECT_EQ(a.path(x, 3), b.path(x, 3));
    EXPECT_NE(a.path(x, 3), a.path(x, 4));
    const std::vector<double> y{0.75};
    EXPECT_NE(a.path(x, 3), a.path(y, 3));
    EXPECT_NE(a.path(x, 3), NoiseSystem(43, 0.01, 100).path(x, 3));
}

TEST(Noise, CoarseningSumsIncrements) {
    const NoiseSystem n = NoiseSystem::dyadic(9, 1.0, 6);
    const std::vector<double> x{0.0, 1.0};
    const auto fine = n.path(x, 0), coarse = n.path(x, 0, 4);
    ASSERT_EQ(coarse.size(), fine.size() / 4);
    for (std::size_t j = 0; j < coarse.size(); ++j)
        EXPECT_NEAR(coarse[j], fine[4 * j] + fine[4 * j + 1] + fine[4 * j + 2] + fine[4 * j + 3], 1e-15);
    EXPECT_THROW(n.path(x, 0, 5), DomainError);
}

TEST(Noise, IncrementMoments) {
    const double dt = 1.0 / 64;
    const NoiseSystem n(5, dt, 64);
    double s = 0.0, s2 = 0.0, s4 = 0.0, cross = 0.0;
    std::size_t count = 0;
    for (std::uint64_t r = 0; r < 2000; ++r) {
        const std::vector<double> x{static_cast<double>(r % 7)};
        const auto p = n.path(x, r);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double z = p[j] / std::sqrt(dt);
            s += z;
            s2 += z * z;
            s4 += z * z * z * z;
            if (j + 1 < p.size()) cross += z * p[j + 1] / std::sqrt(dt);
            ++count;
        }
    }
    const double N = static_cast<double>(count);
    EXPECT_NEAR(s / N, 0.0, 5.0 / std::sqrt(N));
    EXPECT_NEAR(s2 / N, 1.0, 5.0 * std::sqrt(2.0 / N));
    EXPECT_NEAR(s4 / N, 3.0, 5.0 * std::sqrt(96.0 / N));
    EXPECT_NEAR(cross / N, 0.0, 5.0 / std::sqrt(N));
}

TEST(Noise, DyadicGridChecks) {
    EXPECT_THROW(NoiseSystem::dyadic(1, 0.3, 2), DomainError);
    EXPECT_EQ(NoiseSystem::dyadic(1, 0.5, 4).steps(), 8u);
    EXPECT_THROW(NoiseSystem(1, 0.0, 4), DomainError);
}

TEST(PhiloxEngine, DistinctStreams) {
    PhiloxEngine a(1, 0), b(1, 1), c(1, 0);
    const auto x = a(), y = b(), z = c();
    EXPECT_NE(x, y);
    EXPECT_EQ(x, z);
}

TEST(ParallelFor, IndependentOfThreadCount) {
    auto run = [](unsigned threads) {
        std::vector<double> out(97);
        parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = std::sin(static_cast<double>(i)); });
        return out;
    };
    EXPECT_EQ(run(1), run(4));
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }), std::runtime_error);
}
