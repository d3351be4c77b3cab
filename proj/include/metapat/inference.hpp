#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/matrix.hpp"
#include "metapat/mcmc.hpp"

namespace metapat {

/// Partition of the per-gene count of DE studies into null and alternative.
/// B: at least one study. Abar: every study. Rbar: at least r studies.
struct DecisionSpace {
    enum class Kind { B, Abar, Rbar };
    Kind kind = Kind::B;
    std::size_t r = 0;

    static DecisionSpace B() { return {Kind::B, 0}; }
    static DecisionSpace Abar() { return {Kind::Abar, 0}; }
    static DecisionSpace Rbar(std::size_t r) { return {Kind::Rbar, r}; }

    static std::size_t default_r(std::size_t studies) { return studies / 2 + 1; }

    /// Smallest DE-study count that falls in the alternative region.
    std::size_t min_de_studies(std::size_t studies) const {
        switch (kind) {
            case Kind::B: return 1;
            case Kind::Abar: return studies;
            case Kind::Rbar:
                if (r < 1 || r > studies)
                    throw DomainError("decision space rbar needs 1 <= r <= S (got r=" + std::to_string(r) + ")");
                return r;
        }
        return 1;
    }

    std::string name() const {
        switch (kind) {
            case Kind::B: return "B";
            case Kind::Abar: return "Abar";
            case Kind::Rbar: return "rbar";
        }
        return "?";
    }

    static DecisionSpace parse(const std::string& s, std::size_t r = 0) {
        if (s == "B" || s == "b") return B();
        if (s == "Abar" || s == "abar") return Abar();
        if (s == "rbar" || s == "Rbar") return Rbar(r);
        throw DomainError("unknown decision space '" + s + "' (expected B, Abar or rbar)");
    }
};

struct GeneDecision {
    std::vector<double> xi;
    std::vector<bool> declared;
    double kappa = 0.0;
    double achieved_fdr = 0.0;
    std::size_t n_declared = 0;
};

/// Local FDR per gene: the fraction of retained samples in which the gene's
/// joint DE pattern lies in the null region of `space`.
inline std::vector<double> compute_xi(const PosteriorAccumulator& acc, const DecisionSpace& space) {
    if (acc.n_samples == 0) throw DomainError("compute_xi: accumulator holds no samples");
    const std::size_t lo = space.min_de_studies(acc.studies);
    std::vector<double> xi(acc.genes);
    const double n = static_cast<double>(acc.n_samples);
    for (std::size_t g = 0; g < acc.genes; ++g) {
        std::uint64_t alt = 0;
        for (std::size_t k = lo; k <= acc.studies; ++k) alt += acc.de_count_hist(g, k);
        xi[g] = 1.0 - static_cast<double>(alt) / n;
    }
    return xi;
}

/// Declares {g : xi_g <= kappa} for the largest kappa whose declared set has
/// mean xi <= level. Genes tied at the boundary enter or leave together.
inline GeneDecision bayes_fdr_declare(const std::vector<double>& xi, double level) {
    GeneDecision out;
    out.xi = xi;
    out.declared.assign(xi.size(), false);
    std::vector<std::size_t> order(xi.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xi[a] < xi[b]; });

    double sum = 0.0;
    std::size_t accepted = 0;
    double accepted_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        const double v = xi[order[i]];
        double group = 0.0;
        while (j < order.size() && xi[order[j]] == v) group += xi[order[j++]];
        // The running mean is nondecreasing in sorted order, so stop at the first violation.
        if ((sum + group) > level * static_cast<double>(j)) break;
        sum += group;
        accepted = j;
        accepted_sum = sum;
        out.kappa = v;
        i = j;
    }
    for (std::size_t k = 0; k < accepted; ++k) out.declared[order[k]] = true;
    out.n_declared = accepted;
    out.achieved_fdr = accepted ? accepted_sum / static_cast<double>(accepted) : 0.0;
    return out;
}

/// V_gs = Pr(Y = +1) - Pr(Y = -1).
inline Matrix<double> confidence_scores(const PosteriorAccumulator& acc) {
    if (acc.n_samples == 0) throw DomainError("confidence_scores: accumulator holds no samples");
    Matrix<double> v(acc.genes, acc.studies);
    const double n = static_cast<double>(acc.n_samples);
    for (std::size_t g = 0; g < acc.genes; ++g)
        for (std::size_t s = 0; s < acc.studies; ++s)
            v(g, s) = (static_cast<double>(acc.count_pos(g, s)) - static_cast<double>(acc.count_neg(g, s))) / n;
    return v;
}

} // namespace metapat
