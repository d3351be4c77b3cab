#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/special.hpp"

namespace metapat::baselines {

namespace detail {
inline void check_p(std::span<const double> p) {
    if (p.empty()) throw DomainError("combiner: no p-values");
    for (double v : p)
        if (!(v > 0.0 && v <= 1.0)) throw DomainError("combiner: p-values must lie in (0,1]");
}
} // namespace detail

/// Fisher: -2 sum log p against chi-square with 2S degrees of freedom.
inline double fisher(std::span<const double> p) {
    detail::check_p(p);
    double t = 0.0;
    for (double v : p) t -= 2.0 * std::log(v);
    return special::chisq_sf(t, 2.0 * static_cast<double>(p.size()));
}

/// Stouffer: upper normal tail of sum Phi^{-1}(1 - p_s) / sqrt(S).
inline double stouffer(std::span<const double> p) {
    detail::check_p(p);
    double z = 0.0;
    for (double v : p) z += v < 1.0 ? -special::normal_quantile(v) : -40.0;
    z /= std::sqrt(static_cast<double>(p.size()));
    return special::normal_sf(z);
}

/// maxP with its Beta(S, 1) null: (max p)^S.
inline double maxp(std::span<const double> p) {
    detail::check_p(p);
    return std::pow(*std::max_element(p.begin(), p.end()), static_cast<double>(p.size()));
}

/// r-th ordered p-value with its Beta(r, S - r + 1) null.
inline double rop(std::span<const double> p, std::size_t r) {
    detail::check_p(p);
    const std::size_t S = p.size();
    if (r < 1 || r > S) throw DomainError("rop: r must satisfy 1 <= r <= S");
    std::vector<double> sorted(p.begin(), p.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r - 1), sorted.end());
    return special::ibeta(static_cast<double>(r), static_cast<double>(S - r + 1), sorted[r - 1]);
}

struct AwGene {
    std::vector<std::uint8_t> weights;
    double stat = 0.0;  // weighted Fisher statistic at the chosen weights
    double minp = 1.0;  // its chi-square tail probability (uncalibrated)
};

inline constexpr std::size_t kAwMaxStudies = 20;

/// Adaptively weighted Fisher: exhaustive search over the 2^S - 1 nonzero
/// binary weight vectors for the smallest chi-square tail probability. Ties go
/// to fewer nonzero weights, then the lexicographically smallest vector.
inline AwGene aw_fisher(std::span<const double> p) {
    detail::check_p(p);
    const std::size_t S = p.size();
    if (S > kAwMaxStudies) throw DomainError("aw_fisher: more than 20 studies is unsupported");
    std::vector<double> logs(S);
    for (std::size_t s = 0; s < S; ++s) logs[s] = -2.0 * std::log(p[s]);

    // Weight vector as bits: study s is bit (S-1-s), so integer order is lexicographic order.
    auto weight_of = [S](std::uint32_t mask, std::size_t s) { return (mask >> (S - 1 - s)) & 1u; };
    std::uint32_t best_mask = 0;
    double best_p = 2.0, best_t = 0.0;
    int best_pop = 0;
    for (std::uint32_t mask = 1; mask < (1u << S); ++mask) {
        double t = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            if (weight_of(mask, s)) t += logs[s];
        const int pop = std::popcount(mask);
        const double pv = special::chisq_sf(t, 2.0 * pop);
        const bool better = pv < best_p || (pv == best_p && (pop < best_pop || (pop == best_pop && mask < best_mask)));
        if (better) {
            best_p = pv;
            best_t = t;
            best_mask = mask;
            best_pop = pop;
        }
    }
    AwGene out;
    out.weights.resize(S);
    for (std::size_t s = 0; s < S; ++s) out.weights[s] = static_cast<std::uint8_t>(weight_of(best_mask, s));
    out.stat = best_t;
    out.minp = best_p;
    return out;
}

/// Benjamini-Hochberg step-up at `level`.
inline std::vector<bool> bh_fdr(std::span<const double> p, double level) {
    const std::size_t n = p.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::size_t cut = 0;
    for (std::size_t i = n; i > 0; --i) {
        if (p[order[i - 1]] <= level * static_cast<double>(i) / static_cast<double>(n)) {
            cut = i;
            break;
        }
    }
    std::vector<bool> out(n, false);
    for (std::size_t i = 0; i < cut; ++i) out[order[i]] = true;
    return out;
}

/// Two-sided p-value recovered from a one-sided one.
inline double two_sided_from_one_sided(double p1) { return 2.0 * std::min(p1, 1.0 - p1); }

enum class Method { fisher, stouffer, maxp, rop, aw };

inline Method parse_method(const std::string& s) {
    if (s == "fisher") return Method::fisher;
    if (s == "stouffer") return Method::stouffer;
    if (s == "maxp") return Method::maxp;
    if (s == "rop") return Method::rop;
    if (s == "aw") return Method::aw;
    throw DomainError("unknown baseline method '" + s + "'");
}

inline std::string method_name(Method m) {
    switch (m) {
        case Method::fisher: return "fisher";
        case Method::stouffer: return "stouffer";
        case Method::maxp: return "maxp";
        case Method::rop: return "rop";
        case Method::aw: return "aw";
    }
    return "?";
}

/// Combined p-value for one gene (for AW, its minimized p-value).
inline double combine(Method m, std::span<const double> p, std::size_t r = 0) {
    switch (m) {
        case Method::fisher: return fisher(p);
        case Method::stouffer: return stouffer(p);
        case Method::maxp: return maxp(p);
        case Method::rop: return rop(p, r);
        case Method::aw: return aw_fisher(p).minp;
    }
    return 1.0;
}

} // namespace metapat::baselines
