#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/matrix.hpp"
#include "metapat/mcmc.hpp"
#include "metapat/rng.hpp"

namespace metapat {

/// Per-gene posterior vectors laid out as S consecutive triplets
/// (Pr(Y=+1), Pr(Y=-1), Pr(Y=0)).
inline Matrix<double> posterior_vectors(const PosteriorAccumulator& acc, std::span<const std::size_t> genes) {
    Matrix<double> u(genes.size(), 3 * acc.studies);
    for (std::size_t i = 0; i < genes.size(); ++i) {
        const std::size_t g = genes[i];
        for (std::size_t s = 0; s < acc.studies; ++s) {
            u(i, 3 * s) = acc.prob_pos(g, s);
            u(i, 3 * s + 1) = acc.prob_neg(g, s);
            u(i, 3 * s + 2) = acc.prob_null(g, s);
        }
    }
    return u;
}

/// Mean over studies of 1 - cos(U_is, U_js). Each triplet must be a
/// probability vector. Not a metric: the triangle inequality can fail.
inline double cosine_dissim(std::span<const double> ui, std::span<const double> uj) {
    if (ui.size() != uj.size() || ui.size() % 3 != 0 || ui.empty())
        throw DomainError("cosine_dissim: inputs must be equal-length sequences of triplets");
    const std::size_t studies = ui.size() / 3;
    double total = 0.0;
    for (std::size_t s = 0; s < studies; ++s) {
        const double* a = ui.data() + 3 * s;
        const double* b = uj.data() + 3 * s;
        double dot = 0.0, na = 0.0, nb = 0.0, sa = 0.0, sb = 0.0;
        for (int t = 0; t < 3; ++t) {
            if (a[t] < 0.0 || b[t] < 0.0) throw DomainError("cosine_dissim: negative probability");
            dot += a[t] * b[t];
            na += a[t] * a[t];
            nb += b[t] * b[t];
            sa += a[t];
            sb += b[t];
        }
        if (std::fabs(sa - 1.0) > 1e-9 || std::fabs(sb - 1.0) > 1e-9)
            throw DomainError("cosine_dissim: triplet does not sum to 1");
        if (na == 0.0 || nb == 0.0) throw DomainError("cosine_dissim: zero-norm triplet");
        const double cos = std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
        total += 1.0 - cos;
    }
    return total / static_cast<double>(studies);
}

/// Symmetric, zero-diagonal matrix of pairwise dissimilarities.
struct DissimilarityMatrix {
    Matrix<double> d;

    std::size_t size() const noexcept { return d.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return d(i, j); }

    static DissimilarityMatrix from_posteriors(const Matrix<double>& u) {
        DissimilarityMatrix m{Matrix<double>(u.rows(), u.rows(), 0.0)};
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = i + 1; j < u.rows(); ++j) m.d(i, j) = m.d(j, i) = cosine_dissim(u.row(i), u.row(j));
        return m;
    }

    void validate() const {
        if (d.rows() != d.cols()) throw DomainError("dissimilarity matrix must be square");
        for (std::size_t i = 0; i < d.rows(); ++i) {
            if (d(i, i) != 0.0) throw DomainError("dissimilarity matrix must have zero diagonal");
            for (std::size_t j = 0; j < i; ++j)
                if (d(i, j) != d(j, i)) throw DomainError("dissimilarity matrix must be symmetric");
        }
    }

    double mean_offdiag() const {
        const std::size_t n = size();
        if (n < 2) return 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += d(i, j);
        return s / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
    }
};

struct KMedoidsResult {
    std::vector<std::size_t> labels;   // 0..k-1, cluster of each point
    std::vector<std::size_t> medoids;  // point index of each cluster's medoid
    double cost = 0.0;                 // sum of distances to assigned medoids
};

namespace detail {

// Dissimilarity restricted to a subset of points, addressed by position.
struct SubView {
    const Matrix<double>& d;
    std::span<const std::size_t> idx;
    double operator()(std::size_t a, std::size_t b) const { return d(idx[a], idx[b]); }
    std::size_t size() const { return idx.size(); }
};

template <class View>
KMedoidsResult pam(const View& d, std::size_t k) {
    const std::size_t n = d.size();
    if (k == 0 || k > n) throw DomainError("k_medoids: need 1 <= k <= n");
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> medoids;
    std::vector<char> is_medoid(n, 0);
    std::vector<double> nearest(n, inf);

    // BUILD: greedy additions that most reduce total cost.
    while (medoids.size() < k) {
        std::size_t best = n;
        double best_gain = -inf;
        for (std::size_t h = 0; h < n; ++h) {
            if (is_medoid[h]) continue;
            double gain = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double cur = nearest[j];
                const double dj = d(j, h);
                if (cur == inf) gain -= dj;
                else if (dj < cur) gain += cur - dj;
            }
            if (gain > best_gain) {
                best_gain = gain;
                best = h;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], d(j, best));
    }

    std::vector<std::size_t> near_slot(n);
    std::vector<double> d1(n), d2(n);
    auto refresh = [&] {
        for (std::size_t j = 0; j < n; ++j) {
            double a = inf, b = inf;
            std::size_t slot = 0;
            for (std::size_t m = 0; m < k; ++m) {
                const double v = d(j, medoids[m]);
                if (v < a) {
                    b = a;
                    a = v;
                    slot = m;
                } else if (v < b) {
                    b = v;
                }
            }
            near_slot[j] = slot;
            d1[j] = a;
            d2[j] = b;
        }
    };
    refresh();

    // SWAP: apply the best improving (medoid, non-medoid) exchange until none remains.
    std::vector<double> delta(k);
    for (std::size_t iter = 0; iter < 10000; ++iter) {
        double best = 0.0;
        std::size_t best_slot = 0, best_h = n;
        for (std::size_t h = 0; h < n; ++h) {
            if (is_medoid[h]) continue;
            double shared = 0.0;
            std::fill(delta.begin(), delta.end(), 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                const double djh = d(j, h);
                const double common = std::min(djh - d1[j], 0.0);
                shared += common;
                delta[near_slot[j]] += std::min(djh, d2[j]) - d1[j] - common;
            }
            for (std::size_t m = 0; m < k; ++m) {
                const double total = shared + delta[m];
                if (total < best - 1e-12) {
                    best = total;
                    best_slot = m;
                    best_h = h;
                }
            }
        }
        if (best_h == n) break;
        is_medoid[medoids[best_slot]] = 0;
        medoids[best_slot] = best_h;
        is_medoid[best_h] = 1;
        refresh();
    }

    KMedoidsResult out;
    out.medoids = medoids;
    out.labels = near_slot;
    out.cost = std::accumulate(d1.begin(), d1.end(), 0.0);
    return out;
}

} // namespace detail

/// PAM: greedy BUILD followed by SWAP until no exchange lowers the cost.
/// Deterministic; ties resolve toward lower indices.
inline KMedoidsResult k_medoids(const DissimilarityMatrix& d, std::size_t k) {
    if (k > d.size()) throw DomainError("k_medoids: k exceeds the number of points");
    std::vector<std::size_t> all(d.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return detail::pam(detail::SubView{d.d, all}, k);
}

struct TightClustConfig {
    std::size_t k_target = 6;
    std::size_t k_start = 0;  // 0 selects k_target + 5
    std::size_t n_resample = 50;
    double subsample_frac = 0.7;
    double tightness_alpha = 0.8;
    std::size_t stability_top = 3;
    std::size_t min_size = 3;
    /// A candidate is rejected when its mean within-set dissimilarity exceeds
    /// this fraction of the mean over all pairs of the input.
    double max_spread_ratio = 0.5;
    std::uint64_t seed = 1;

    std::size_t effective_k_start() const { return k_start ? k_start : k_target + 5; }

    void validate() const {
        if (k_target == 0) throw DomainError("tight_cluster: k_target must be positive");
        if (!(subsample_frac > 0.0 && subsample_frac <= 1.0))
            throw DomainError("tight_cluster: subsample_frac must be in (0, 1]");
        if (!(tightness_alpha > 0.5 && tightness_alpha <= 1.0))
            throw DomainError("tight_cluster: tightness_alpha must be in (0.5, 1]");
        if (n_resample == 0) throw DomainError("tight_cluster: n_resample must be positive");
        if (stability_top == 0) throw DomainError("tight_cluster: stability_top must be positive");
        if (min_size < 2) throw DomainError("tight_cluster: min_size must be at least 2");
        if (!(max_spread_ratio > 0.0)) throw DomainError("tight_cluster: max_spread_ratio must be positive");
    }
};

struct TightCandidate {
    std::vector<std::size_t> members;  // indices into the input matrix
    double mean_comembership = 0.0;
    double mean_dissim = 0.0;
    std::size_t k = 0;
};

struct ModuleAssignment {
    std::vector<std::size_t> labels;  // 0 = scattered, 1..k_found = module
    std::size_t k_found = 0;
    std::vector<TightCandidate> modules;  // extracted modules in extraction order
};

namespace detail {

// Co-membership proportions among `items` at K clusters: for each pair, the
// fraction of resamples in which both were drawn that put them together.
inline Matrix<double> comembership(const DissimilarityMatrix& d, std::span<const std::size_t> items,
                                   std::span<const std::uint64_t> keys, std::size_t K,
                                   const TightClustConfig& cfg, std::uint64_t round) {
    const std::size_t n = items.size();
    Matrix<std::uint32_t> together(n, n, 0), present(n, n, 0);
    std::vector<std::size_t> local;  // positions into items
    std::vector<std::size_t> global;
    for (std::size_t b = 0; b < cfg.n_resample; ++b) {
        local.clear();
        for (std::size_t i = 0; i < n; ++i) {
            // Inclusion is keyed on item identity so relabeling the input does not change draws.
            Rng r(splitmix64(cfg.seed ^ splitmix64(round * 1000003ULL + b)) ^ keys[items[i]]);
            if (r.uniform() < cfg.subsample_frac) local.push_back(i);
        }
        if (local.size() < 2) continue;
        global.resize(local.size());
        for (std::size_t i = 0; i < local.size(); ++i) global[i] = items[local[i]];
        const std::size_t k = std::min(K, local.size());
        const auto res = pam(SubView{d.d, global}, k);
        for (std::size_t a = 0; a < local.size(); ++a) {
            for (std::size_t c = a + 1; c < local.size(); ++c) {
                ++present(local[a], local[c]);
                if (res.labels[a] == res.labels[c]) ++together(local[a], local[c]);
            }
        }
    }
    Matrix<double> m(n, n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        m(a, a) = 1.0;
        for (std::size_t c = a + 1; c < n; ++c) {
            const double v = present(a, c) ? static_cast<double>(together(a, c)) / present(a, c) : 0.0;
            m(a, c) = m(c, a) = v;
        }
    }
    return m;
}

// Greedy partition of the items into cliques of the graph {M >= alpha}.
inline std::vector<std::vector<std::size_t>> tight_sets(const Matrix<double>& m, std::span<const std::uint64_t> key_of,
                                                        double alpha) {
    const std::size_t n = m.rows();
    std::vector<char> used(n, 0);
    std::vector<std::vector<std::size_t>> sets;
    auto key_less = [&](std::size_t a, std::size_t b) { return key_of[a] < key_of[b]; };
    for (;;) {
        std::size_t seed = n;
        std::size_t best_deg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            std::size_t deg = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && !used[j] && m(i, j) >= alpha) ++deg;
            if (seed == n || deg > best_deg || (deg == best_deg && key_less(i, seed))) {
                seed = i;
                best_deg = deg;
            }
        }
        if (seed == n) break;
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < n; ++j)
            if (j != seed && !used[j] && m(seed, j) >= alpha) order.push_back(j);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (m(seed, a) != m(seed, b)) return m(seed, a) > m(seed, b);
            return key_less(a, b);
        });
        std::vector<std::size_t> set{seed};
        for (std::size_t u : order) {
            bool ok = true;
            for (std::size_t w : set)
                if (m(u, w) < alpha) {
                    ok = false;
                    break;
                }
            if (ok) set.push_back(u);
        }
        for (std::size_t u : set) used[u] = 1;
        sets.push_back(std::move(set));
    }
    return sets;
}

} // namespace detail

/// Resampling-based tight clustering on a dissimilarity matrix.
///
/// Starting from K = k_start, repeatedly: cluster n_resample subsamples with
/// PAM, build the co-membership matrix of the remaining items, split it into
/// groups whose pairwise co-membership is at least tightness_alpha, rank the
/// groups by size then mean co-membership, and extract the best of the top
/// `stability_top` that has at least min_size members and passes the spread
/// check, then close it over items no farther from it than its own members.
/// K drops by one after every round. Items never extracted get label 0.
///
/// `keys` identify items for subsampling and tie-breaks (default: index), so
/// permuting the input together with its keys permutes the output.
inline ModuleAssignment tight_cluster(const DissimilarityMatrix& d, const TightClustConfig& cfg,
                                      std::span<const std::uint64_t> keys = {}) {
    cfg.validate();
    const std::size_t n = d.size();
    std::vector<std::uint64_t> own_keys;
    if (keys.empty()) {
        own_keys.resize(n);
        for (std::size_t i = 0; i < n; ++i) own_keys[i] = splitmix64(i);
        keys = own_keys;
    }
    if (keys.size() != n) throw DomainError("tight_cluster: one key per item required");

    ModuleAssignment out;
    out.labels.assign(n, 0);
    const double spread_cap = cfg.max_spread_ratio * d.mean_offdiag();

    std::vector<std::size_t> remaining(n);
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    std::sort(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

    std::size_t K = cfg.effective_k_start();
    std::uint64_t round = 0;
    while (out.k_found < cfg.k_target && remaining.size() >= cfg.min_size && K >= 1) {
        const std::size_t k_eff = std::min(K, remaining.size());
        const auto m = detail::comembership(d, remaining, keys, k_eff, cfg, round++);
        std::vector<std::uint64_t> local_keys(remaining.size());
        for (std::size_t i = 0; i < remaining.size(); ++i) local_keys[i] = keys[remaining[i]];
        auto sets = detail::tight_sets(m, local_keys, cfg.tightness_alpha);

        std::vector<TightCandidate> cands;
        for (const auto& s : sets) {
            TightCandidate c;
            c.k = k_eff;
            double msum = 0.0, dsum = 0.0;
            for (std::size_t a = 0; a < s.size(); ++a)
                for (std::size_t b = a + 1; b < s.size(); ++b) {
                    msum += m(s[a], s[b]);
                    dsum += d(remaining[s[a]], remaining[s[b]]);
                }
            const double pairs = 0.5 * static_cast<double>(s.size()) * static_cast<double>(s.size() - 1);
            c.mean_comembership = pairs > 0 ? msum / pairs : 1.0;
            c.mean_dissim = pairs > 0 ? dsum / pairs : 0.0;
            for (std::size_t i : s) c.members.push_back(remaining[i]);
            cands.push_back(std::move(c));
        }
        std::sort(cands.begin(), cands.end(), [&](const TightCandidate& a, const TightCandidate& b) {
            if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
            if (a.mean_comembership != b.mean_comembership) return a.mean_comembership > b.mean_comembership;
            return keys[a.members.front()] < keys[b.members.front()];
        });
        if (cands.size() > cfg.stability_top) cands.resize(cfg.stability_top);

        const TightCandidate* chosen = nullptr;
        for (const auto& c : cands) {
            if (c.members.size() >= cfg.min_size && c.mean_dissim <= spread_cap) {
                chosen = &c;
                break;
            }
        }
        if (chosen) {
            ++out.k_found;
            TightCandidate module = *chosen;
            // Closure: an item at least as close to the module on average as its
            // members are to each other joins it. PAM at K above the true
            // number of groups tends to split a few members off each round.
            std::vector<std::size_t> joined;
            for (std::size_t i : remaining) {
                if (std::find(module.members.begin(), module.members.end(), i) != module.members.end()) continue;
                double sum = 0.0;
                for (std::size_t m : module.members) sum += d(i, m);
                if (sum / static_cast<double>(module.members.size()) <= module.mean_dissim) joined.push_back(i);
            }
            module.members.insert(module.members.end(), joined.begin(), joined.end());
            for (std::size_t i : module.members) out.labels[i] = out.k_found;
            out.modules.push_back(std::move(module));
            std::erase_if(remaining, [&](std::size_t i) { return out.labels[i] != 0; });
        }
        if (K == 1) break;
        --K;
    }
    return out;
}

} // namespace metapat
