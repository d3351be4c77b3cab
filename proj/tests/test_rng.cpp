#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "metapat/rng.hpp"

using metapat::Rng;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

template <class Draw>
Moments sample_moments(Draw draw, int n) {
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = draw();
        s += x;
        ss += x * x;
    }
    const double m = s / n;
    return {m, ss / n - m * m};
}

} // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.bits(), b.bits());
}

TEST(Rng, NamedStreamsDiffer) {
    Rng a(5, "mcmc.study", 0), b(5, "mcmc.study", 1), c(5, "mcmc.global", 0);
    EXPECT_NE(a.bits(), b.bits());
    EXPECT_NE(Rng(5, "mcmc.study", 0).bits(), c.bits());
}

TEST(Rng, UniformIsOpenInterval) {
    Rng r(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, BelowCoversRangeEvenly) {
    Rng r(2);
    std::vector<int> hits(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++hits[r.below(7)];
    for (int h : hits) EXPECT_NEAR(h, n / 7.0, 5.0 * std::sqrt(n / 7.0));
}

TEST(Rng, NormalMoments) {
    Rng r(3);
    const int n = 200000;
    const auto m = sample_moments([&] { return r.normal(); }, n);
    EXPECT_NEAR(m.mean, 0.0, 3.0 / std::sqrt(n));
    EXPECT_NEAR(m.var, 1.0, 3.0 * std::sqrt(2.0 / n));
}

class GammaMoments : public ::testing::TestWithParam<double> {};

TEST_P(GammaMoments, MatchShape) {
    const double a = GetParam();
    Rng r(4);
    const int n = 200000;
    const auto m = sample_moments([&] { return r.gamma(a); }, n);
    EXPECT_NEAR(m.mean, a, 3.5 * std::sqrt(a / n));
    EXPECT_NEAR(m.var, a, 0.05 * a + 3.5 * std::sqrt((6.0 * a * a + 2.0 * a) / n));
}

INSTANTIATE_TEST_SUITE_P(Shapes, GammaMoments, ::testing::Values(0.05, 0.5, 1.0, 2.5, 30.0));

class BetaMoments : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(BetaMoments, MeanWithinThreeStandardErrors) {
    const auto [a, b] = GetParam();
    Rng r(6);
    const int n = 100000;
    const double mean = a / (a + b);
    const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    const auto m = sample_moments([&] { return r.beta(a, b); }, n);
    EXPECT_NEAR(m.mean, mean, 3.0 * std::sqrt(var / n));
    EXPECT_NEAR(m.var, var, 0.05 * var);
}

INSTANTIATE_TEST_SUITE_P(Shapes, BetaMoments,
                         ::testing::Values(std::pair{0.5, 3.5}, std::pair{3.5, 0.5}, std::pair{2.5, 0.5},
                                           std::pair{1.5, 1.5}, std::pair{0.1, 0.9}));

TEST(Rng, BetaStaysInsideUnitInterval) {
    Rng r(7);
    for (int i = 0; i < 100000; ++i) {
        const double x = r.beta(0.01, 0.01);
        ASSERT_GT(x, 0.0);
        ASSERT_LT(x, 1.0);
    }
}

TEST(Rng, TruncatedNormalRespectsBoundAndMean) {
    Rng r(8);
    const int n = 100000;
    const double lower = 1.0;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.truncated_normal_above(0.0, 1.0, lower);
        ASSERT_GT(x, lower);
        s += x;
    }
    // E[X | X > a] = phi(a) / (1 - Phi(a)) for a standard normal.
    const double expect = metapat::special::normal_pdf(lower) / metapat::special::normal_sf(lower);
    EXPECT_NEAR(s / n, expect, 0.01);
}

TEST(Rng, SerializeRoundTrip) {
    Rng a(10);
    for (int i = 0; i < 17; ++i) a.normal();
    Rng b;
    b.deserialize(a.serialize());
    EXPECT_TRUE(a == b);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.uniform(), b.uniform());
}
