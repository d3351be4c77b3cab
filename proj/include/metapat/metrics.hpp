#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/inference.hpp"
#include "metapat/simgen.hpp"

namespace metapat {

struct EvalReport {
    DecisionSpace space;
    double fdr = 0.0;
    double fnr = 0.0;
    double auc = 0.5;
    std::size_t n_declared = 0;
    std::size_t n_true_alt = 0;
    std::size_t genes = 0;
};

/// True alternative status of each gene in a decision space.
inline std::vector<bool> truth_label(const sim::SimTruth& truth, const DecisionSpace& space) {
    const std::size_t lo = space.min_de_studies(truth.studies());
    std::vector<bool> alt(truth.genes());
    for (std::size_t g = 0; g < truth.genes(); ++g) alt[g] = truth.de_studies(g) >= lo;
    return alt;
}

/// Area under the ROC curve by the rank-sum statistic with mid-ranks for ties.
inline double auc_rank_sum(std::span<const double> score, const std::vector<bool>& alt) {
    const std::size_t n = score.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && score[order[j]] == score[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (alt[order[k]]) {
                rank_sum += mid;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// FDR = FP / max(1, declared); FNR = FN / G; AUC of `score` (higher means
/// more likely alternative) against the truth.
inline EvalReport evaluate(const std::vector<bool>& declared, std::span<const double> score,
                           const std::vector<bool>& truth_alt, DecisionSpace space = DecisionSpace::B()) {
    const std::size_t n = declared.size();
    if (score.size() != n || truth_alt.size() != n) throw DomainError("evaluate: length mismatch");
    EvalReport r;
    r.space = space;
    r.genes = n;
    std::size_t fp = 0, fn = 0;
    for (std::size_t g = 0; g < n; ++g) {
        r.n_declared += declared[g];
        r.n_true_alt += truth_alt[g];
        fp += declared[g] && !truth_alt[g];
        fn += !declared[g] && truth_alt[g];
    }
    r.fdr = static_cast<double>(fp) / static_cast<double>(std::max<std::size_t>(1, r.n_declared));
    r.fnr = n ? static_cast<double>(fn) / static_cast<double>(n) : 0.0;
    r.auc = auc_rank_sum(score, truth_alt);
    return r;
}

} // namespace metapat
