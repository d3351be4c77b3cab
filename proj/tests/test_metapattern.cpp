#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "metapat/metapattern.hpp"
#include "metapat/rng.hpp"

using namespace metapat;

namespace {

DissimilarityMatrix from_function(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f) {
    DissimilarityMatrix d{Matrix<double>(n, n, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d.d(i, j) = d.d(j, i) = f(i, j);
    return d;
}

DissimilarityMatrix random_points(std::size_t n, Rng& rng) {
    std::vector<std::pair<double, double>> pts(n);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
    return from_function(n, [&](std::size_t i, std::size_t j) {
        return std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
    });
}

// Best cost over every choice of k medoids; equals the best k-partition cost
// because each point joins its nearest medoid.
double exhaustive_best_cost(const DissimilarityMatrix& d, std::size_t k) {
    const std::size_t n = d.size();
    double best = INFINITY;
    std::vector<int> pick(n, 0);
    std::fill(pick.end() - static_cast<std::ptrdiff_t>(k), pick.end(), 1);
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double m = INFINITY;
            for (std::size_t j = 0; j < n; ++j)
                if (pick[j]) m = std::min(m, d(i, j));
            cost += m;
        }
        best = std::min(best, cost);
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

// n points in `blocks` ideal groups of equal size.
DissimilarityMatrix block_matrix(std::size_t blocks, std::size_t size, double within, double between) {
    return from_function(blocks * size, [&](std::size_t i, std::size_t j) { return i / size == j / size ? within : between; });
}

} // namespace

TEST(CosineDissim, Examples) {
    const std::vector<double> a{0.7, 0.1, 0.2, 0.0, 0.0, 1.0};
    EXPECT_NEAR(cosine_dissim(a, a), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(cosine_dissim(std::vector<double>{1, 0, 0}, std::vector<double>{0, 1, 0}), 1.0);
    const std::vector<double> b{0.7, 0.1, 0.2, 1.0, 0.0, 0.0};
    EXPECT_NEAR(cosine_dissim(a, b), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(cosine_dissim(a, b), cosine_dissim(b, a));
}

TEST(CosineDissim, RejectsInvalidTriplets) {
    EXPECT_THROW(cosine_dissim(std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{1, 0, 0}), DomainError);
    EXPECT_THROW(cosine_dissim(std::vector<double>{-0.1, 0.6, 0.5}, std::vector<double>{1, 0, 0}), DomainError);
    EXPECT_THROW(cosine_dissim(std::vector<double>{1, 0}, std::vector<double>{1, 0}), DomainError);
}

TEST(CosineDissim, RangeOnRandomTriplets) {
    Rng rng(1);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> u(6), v(6);
        for (auto* w : {&u, &v})
            for (int s = 0; s < 2; ++s) {
                double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
                const double t = a + b + c;
                (*w)[3 * s] = a / t;
                (*w)[3 * s + 1] = b / t;
                (*w)[3 * s + 2] = 1.0 - a / t - b / t;
            }
        const double d = cosine_dissim(u, v);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
    }
}

TEST(DissimilarityMatrix, FromPosteriorsIsValid) {
    PosteriorAccumulator acc(3, 2);
    acc.n_samples = 4;
    const std::uint32_t pos[3][2] = {{4, 0}, {4, 1}, {0, 0}};
    const std::uint32_t neg[3][2] = {{0, 4}, {0, 3}, {0, 0}};
    for (std::size_t g = 0; g < 3; ++g)
        for (std::size_t s = 0; s < 2; ++s) {
            acc.count_pos(g, s) = pos[g][s];
            acc.count_neg(g, s) = neg[g][s];
            acc.count_null(g, s) = 4 - pos[g][s] - neg[g][s];
        }
    const std::vector<std::size_t> genes{0, 1, 2};
    const auto d = DissimilarityMatrix::from_posteriors(posterior_vectors(acc, genes));
    EXPECT_NO_THROW(d.validate());
    EXPECT_LT(d(0, 1), d(0, 2));
    EXPECT_DOUBLE_EQ(d(0, 2), 1.0);
}

TEST(KMedoids, SeparatedPairs) {
    const auto d = from_function(4, [](std::size_t i, std::size_t j) { return i / 2 == j / 2 ? 0.01 : 0.9; });
    const auto r = k_medoids(d, 2);
    EXPECT_EQ(r.labels[0], r.labels[1]);
    EXPECT_EQ(r.labels[2], r.labels[3]);
    EXPECT_NE(r.labels[0], r.labels[2]);
    EXPECT_NEAR(r.cost, 0.02, 1e-15);
}

TEST(KMedoids, KEqualsN) {
    Rng rng(2);
    const auto d = random_points(6, rng);
    const auto r = k_medoids(d, 6);
    EXPECT_DOUBLE_EQ(r.cost, 0.0);
    std::vector<std::size_t> sorted = r.labels;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_THROW(k_medoids(d, 7), DomainError);
}

TEST(KMedoids, WithinFivePercentOfExhaustiveOptimum) {
    Rng rng(3);
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n = 4 + rng.below(5);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(n - 1, 4));
        const auto d = random_points(n, rng);
        const auto r = k_medoids(d, k);
        const double best = exhaustive_best_cost(d, k);
        EXPECT_LE(r.cost, best * 1.05 + 1e-12) << "n=" << n << " k=" << k;
        // Reported cost is consistent with the labels and medoids.
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) cost += d(i, r.medoids[r.labels[i]]);
        EXPECT_NEAR(cost, r.cost, 1e-12);
    }
}

TEST(TightCluster, RecoversIdealBlocks) {
    const auto d = block_matrix(3, 12, 0.02, 0.9);
    TightClustConfig cfg;
    cfg.k_target = 3;
    cfg.n_resample = 20;
    const auto res = tight_cluster(d, cfg);
    EXPECT_EQ(res.k_found, 3u);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_NE(res.labels[i], 0u);
        EXPECT_EQ(res.labels[i], res.labels[(i / 12) * 12]);
    }
}

TEST(TightCluster, PureNoiseIsMostlyScattered) {
    double scattered = 0.0, total = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        const std::size_t n = 60;
        Matrix<double> raw(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) raw(i, j) = 0.4 + 0.2 * rng.uniform();
        const auto d = from_function(n, [&](std::size_t i, std::size_t j) { return 0.5 * (raw(i, j) + raw(j, i)); });
        TightClustConfig cfg;
        cfg.k_target = 2;
        cfg.n_resample = 20;
        cfg.seed = seed;
        const auto res = tight_cluster(d, cfg);
        for (auto l : res.labels) scattered += l == 0;
        total += static_cast<double>(n);
    }
    EXPECT_GE(scattered / total, 0.8);
}

TEST(TightCluster, PermutationEquivariant) {
    Rng rng(5);
    const std::size_t n = 45;
    // Three noisy blocks plus a few stragglers.
    std::vector<int> group(n);
    for (std::size_t i = 0; i < n; ++i) group[i] = i < 40 ? static_cast<int>(i % 4) : -1;
    const auto d = from_function(n, [&](std::size_t i, std::size_t j) {
        const bool same = group[i] >= 0 && group[i] == group[j];
        return (same ? 0.05 : 0.8) + 0.05 * rng.uniform();
    });
    TightClustConfig cfg;
    cfg.k_target = 4;
    cfg.n_resample = 15;
    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = splitmix64(1000 + i);
    const auto base = tight_cluster(d, cfg, keys);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const auto dp = from_function(n, [&](std::size_t i, std::size_t j) { return d(perm[i], perm[j]); });
    std::vector<std::uint64_t> kp(n);
    for (std::size_t i = 0; i < n; ++i) kp[i] = keys[perm[i]];
    const auto moved = tight_cluster(dp, cfg, kp);
    EXPECT_EQ(moved.k_found, base.k_found);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(moved.labels[i], base.labels[perm[i]]);
}

TEST(TightCluster, ModulesAreTightOnBlockData) {
    Rng rng(6);
    const std::size_t n = 80;
    const auto d = from_function(n, [&](std::size_t i, std::size_t j) {
        return (i / 20 == j / 20 ? 0.05 : 0.7) + 0.2 * rng.uniform();
    });
    TightClustConfig cfg;
    cfg.k_target = 4;
    cfg.n_resample = 15;
    const auto res = tight_cluster(d, cfg);
    std::vector<double> all;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) all.push_back(d(i, j));
    std::sort(all.begin(), all.end());
    const double p99 = all[static_cast<std::size_t>(0.99 * static_cast<double>(all.size() - 1))];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (res.labels[i] != 0 && res.labels[i] == res.labels[j]) EXPECT_LE(d(i, j), p99);
    EXPECT_GE(res.k_found, 1u);
    EXPECT_LE(res.k_found, cfg.k_target);
}

TEST(TightClustConfig, Validation) {
    TightClustConfig cfg;
    cfg.tightness_alpha = 0.5;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg = {};
    cfg.subsample_frac = 0.0;
    EXPECT_THROW(cfg.validate(), DomainError);
    cfg = {};
    EXPECT_EQ(cfg.effective_k_start(), 11u);
}
