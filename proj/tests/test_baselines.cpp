#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "metapat/baselines.hpp"
#include "metapat/rng.hpp"
#include "oracles.hpp"

using namespace metapat;
using namespace metapat::baselines;

namespace {

// Chi-square upper tail for even degrees of freedom 2k: e^{-x/2} sum_{j<k} (x/2)^j / j!.
double chisq_even_sf(double x, int k) {
    double term = 1.0, sum = 1.0;
    for (int j = 1; j < k; ++j) {
        term *= (x / 2.0) / j;
        sum += term;
    }
    return std::exp(-x / 2.0) * sum;
}

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

std::vector<bool> bh_oracle(const std::vector<double>& p, double level) {
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(p.size());
    double cutoff = -1.0;
    for (std::size_t k = 1; k <= sorted.size(); ++k)
        if (sorted[k - 1] <= level * static_cast<double>(k) / n) cutoff = sorted[k - 1];
    std::vector<bool> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] <= cutoff;
    return out;
}

using Vec = std::vector<double>;

} // namespace

TEST(Fisher, Examples) {
    EXPECT_NEAR(fisher(Vec{0.05}), 0.05, 1e-14);
    const double t = -4.0 * std::log(0.05);
    EXPECT_NEAR(t, 11.983, 1e-3);
    EXPECT_NEAR(fisher(Vec{0.05, 0.05}), chisq_even_sf(t, 2), 1e-14);
    EXPECT_NEAR(fisher(Vec{0.05, 0.05}), 0.01747, 1e-5);
    EXPECT_NEAR(fisher(Vec{1.0 - 1e-12, 1.0 - 1e-12, 1.0 - 1e-12}), 1.0, 1e-9);
}

TEST(Fisher, MatchesEvenDfClosedForm) {
    Rng rng(1);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t S = 1 + rng.below(8);
        Vec p(S);
        double t = 0.0;
        for (auto& v : p) {
            v = rng.uniform();
            t -= 2.0 * std::log(v);
        }
        const double oracle = chisq_even_sf(t, static_cast<int>(S));
        EXPECT_NEAR(fisher(p), oracle, 1e-12 * std::max(1.0, oracle)) << rep;
    }
}

TEST(Stouffer, Examples) {
    EXPECT_NEAR(stouffer(Vec{0.05}), 0.05, 1e-12);
    // z = 2 * 1.6448536 / sqrt(2)
    EXPECT_NEAR(stouffer(Vec{0.05, 0.05}), upper_normal_tail(2.0 * 1.6448536269514722 / std::sqrt(2.0)), 1e-12);
    EXPECT_NEAR(stouffer(Vec{0.05, 0.05}), 0.0100046, 1e-7);
    EXPECT_NEAR(stouffer(Vec{0.5, 0.5, 0.5}), 0.5, 1e-15);
}

TEST(MaxP, Examples) {
    EXPECT_NEAR(maxp(Vec{0.1, 0.02, 0.05}), 0.001, 1e-15);
    EXPECT_DOUBLE_EQ(maxp(Vec{0.3}), 0.3);
}

TEST(Rop, Examples) {
    const Vec p{0.2, 0.7, 0.4};
    EXPECT_NEAR(rop(p, 3), maxp(p), 1e-14);
    EXPECT_NEAR(rop(Vec{0.2, 0.9}, 1), 1.0 - 0.8 * 0.8, 1e-14);
    EXPECT_THROW(rop(p, 0), DomainError);
    EXPECT_THROW(rop(p, 4), DomainError);
}

TEST(Combiners, RejectInvalidInput) {
    EXPECT_THROW(fisher(Vec{}), DomainError);
    EXPECT_THROW(fisher(Vec{0.0, 0.5}), DomainError);
    EXPECT_THROW(stouffer(Vec{1.5}), DomainError);
}

TEST(Combiners, UniformUnderNull) {
    const std::size_t n = 10000;
    for (const auto& [m, d] : oracle::combiner_null_ks(n)) {
        EXPECT_LT(d, oracle::ks_critical(n)) << method_name(m);
        if (m == Method::maxp) EXPECT_LT(d, 0.02);
    }
}

TEST(Combiners, MonotoneInEachStudy) {
    Rng rng(3);
    for (int rep = 0; rep < 300; ++rep) {
        Vec p(3);
        for (auto& v : p) v = rng.uniform();
        Vec q = p;
        const std::size_t s = rng.below(3);
        q[s] *= rng.uniform();
        for (auto m : {Method::fisher, Method::stouffer, Method::maxp, Method::rop})
            EXPECT_LE(combine(m, q, 2), combine(m, p, 2) + 1e-15) << method_name(m);
    }
}

TEST(AwFisher, TwoStudyEnumeration) {
    const auto a = aw_fisher(Vec{0.001, 0.9});
    EXPECT_EQ(a.weights, (std::vector<std::uint8_t>{1, 0}));
    EXPECT_NEAR(a.minp, 0.001, 1e-14);
    // Candidates: (1,0) -> 0.001, (0,1) -> 0.9, (1,1) -> Fisher of both.
    EXPECT_LT(0.001, fisher(Vec{0.001, 0.9}));

    const auto b = aw_fisher(Vec{0.001, 0.001});
    EXPECT_EQ(b.weights, (std::vector<std::uint8_t>{1, 1}));
    EXPECT_NEAR(b.minp, chisq_even_sf(-4.0 * std::log(0.001), 2), 1e-15);
}

TEST(AwFisher, MatchesBruteForceSearch) {
    Rng rng(4);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t S = 1 + rng.below(5);
        Vec p(S);
        for (auto& v : p) v = std::pow(rng.uniform(), 3.0);
        double best = 2.0;
        for (std::uint32_t mask = 1; mask < (1u << S); ++mask) {
            double t = 0.0;
            int k = 0;
            for (std::size_t s = 0; s < S; ++s)
                if (mask & (1u << s)) t -= 2.0 * std::log(p[s]), ++k;
            best = std::min(best, chisq_even_sf(t, k));
        }
        const auto aw = aw_fisher(p);
        EXPECT_NEAR(aw.minp, best, 1e-12 * std::max(best, 1e-300));
        EXPECT_LE(aw.minp, fisher(p) * (1.0 + 1e-12));
        EXPECT_TRUE(std::any_of(aw.weights.begin(), aw.weights.end(), [](auto w) { return w != 0; }));
    }
}

TEST(AwFisher, EqualPValuesAreDeterministic) {
    const auto a = aw_fisher(Vec{0.3, 0.3, 0.3});
    const auto b = aw_fisher(Vec{0.3, 0.3, 0.3});
    EXPECT_EQ(a.weights, b.weights);
    // With equal p the single-study vectors tie; the tie rule picks the last
    // study's vector (lexicographically smallest).
    EXPECT_EQ(a.weights, (std::vector<std::uint8_t>{0, 0, 1}));
    EXPECT_THROW(aw_fisher(Vec(21, 0.5)), DomainError);
}

TEST(BenjaminiHochberg, Examples) {
    EXPECT_EQ(bh_fdr(Vec{0.01}, 0.05), std::vector<bool>{true});
    EXPECT_EQ(bh_fdr(Vec{1.0, 1.0, 1.0}, 0.05), (std::vector<bool>{false, false, false}));
    // Step-up: 0.04 <= 0.05 * 4 / 4 rescues the smaller ones too.
    EXPECT_EQ(bh_fdr(Vec{0.04, 0.03, 0.035, 0.02}, 0.05), (std::vector<bool>{true, true, true, true}));
}

TEST(BenjaminiHochberg, MatchesBruteForceStepUp) {
    Rng rng(5);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t n = 1 + rng.below(200);
        Vec p(n);
        for (auto& v : p) v = rep % 4 == 0 ? std::round(rng.uniform() * 40.0) / 40.0 : std::pow(rng.uniform(), 4.0);
        const double level = 0.01 + 0.2 * rng.uniform();
        ASSERT_EQ(bh_fdr(p, level), bh_oracle(p, level)) << rep;
    }
}

TEST(Methods, ParseAndName) {
    for (auto name : {"fisher", "stouffer", "maxp", "rop", "aw"}) EXPECT_EQ(method_name(parse_method(name)), name);
    EXPECT_THROW(parse_method("minp"), DomainError);
    EXPECT_DOUBLE_EQ(two_sided_from_one_sided(0.02), 0.04);
    EXPECT_DOUBLE_EQ(two_sided_from_one_sided(0.98), 2.0 * (1.0 - 0.98));
}
