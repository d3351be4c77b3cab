#include <vector>

#include <gtest/gtest.h>

#include "metapat/metrics.hpp"
#include "metapat/rng.hpp"

using namespace metapat;

namespace {

// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
double auc_pairs(const std::vector<double>& s, const std::vector<bool>& alt) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (!alt[i] || alt[j]) continue;
            den += 1.0;
            num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    return num / den;
}

} // namespace

TEST(Auc, MatchesPairwiseCountWithTies) {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> s(n);
        std::vector<bool> alt(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(6));  // heavy ties
            alt[i] = rng.uniform() < 0.4;
        }
        alt[0] = true;
        alt[1] = false;
        EXPECT_NEAR(auc_rank_sum(s, alt), auc_pairs(s, alt), 1e-12);
    }
}

TEST(Auc, PerfectReversedAndDegenerate) {
    const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    EXPECT_DOUBLE_EQ(auc_rank_sum(s, {false, false, true, true}), 1.0);
    EXPECT_DOUBLE_EQ(auc_rank_sum(s, {true, true, false, false}), 0.0);
    EXPECT_DOUBLE_EQ(auc_rank_sum(s, {true, true, true, true}), 0.5);
    EXPECT_DOUBLE_EQ(auc_rank_sum(std::vector<double>(4, 1.0), {true, false, true, false}), 0.5);
}

TEST(Evaluate, FdrAndFnrDefinitions) {
    // 10 genes, 4 true. Declared: 3 true + 2 false. FN = 1.
    std::vector<bool> truth{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<bool> declared{1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
    std::vector<double> score{9, 8, 7, 1, 6, 5, 0, 0, 0, 0};
    const auto r = evaluate(declared, score, truth);
    EXPECT_DOUBLE_EQ(r.fdr, 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(r.fnr, 1.0 / 10.0);
    EXPECT_EQ(r.n_declared, 5u);
    EXPECT_EQ(r.n_true_alt, 4u);
    EXPECT_NEAR(r.auc, auc_pairs(score, truth), 1e-12);
}

TEST(Evaluate, NothingDeclaredHasZeroFdr) {
    std::vector<bool> truth{1, 0, 0};
    const auto r = evaluate({0, 0, 0}, std::vector<double>{0.3, 0.2, 0.1}, truth);
    EXPECT_EQ(r.fdr, 0.0);
    EXPECT_DOUBLE_EQ(r.fnr, 1.0 / 3.0);
    EXPECT_THROW(evaluate({0, 0}, std::vector<double>{0.3, 0.2, 0.1}, truth), DomainError);
}

TEST(TruthLabel, FollowsDecisionSpace) {
    sim::SimTruth t;
    t.is_de = {false, true, true, true};
    t.de_mask = Matrix<std::uint8_t>(4, 3, 0);
    // DE study counts 0, 1, 2, 3
    t.de_mask(1, 0) = 1;
    t.de_mask(2, 0) = t.de_mask(2, 2) = 1;
    t.de_mask(3, 0) = t.de_mask(3, 1) = t.de_mask(3, 2) = 1;
    EXPECT_EQ(truth_label(t, DecisionSpace::B()), (std::vector<bool>{0, 1, 1, 1}));
    EXPECT_EQ(truth_label(t, DecisionSpace::Abar()), (std::vector<bool>{0, 0, 0, 1}));
    EXPECT_EQ(truth_label(t, DecisionSpace::Rbar(2)), (std::vector<bool>{0, 0, 1, 1}));
    EXPECT_THROW(truth_label(t, DecisionSpace::Rbar(4)), DomainError);
}
