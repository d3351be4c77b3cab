#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "metapat/dp.hpp"
#include "metapat/error.hpp"
#include "metapat/matrix.hpp"
#include "metapat/rng.hpp"
#include "metapat/special.hpp"

namespace metapat {

enum class InitMode { threshold, null };

struct McmcConfig {
    std::size_t n_iter = 10000;
    std::size_t burn_in = 500;
    std::size_t thin = 1;
    std::uint64_t seed = 42;
    double beta = 0.5;
    double sigma0_sq = kDefaultSigma0Sq;
    double alpha_pos = kDefaultAlpha;
    double alpha_neg = kDefaultAlpha;
    double gamma_proposal_sd = 0.1;
    InitMode init = InitMode::threshold;
    /// Worker threads for the per-study assignment step. Results do not depend
    /// on this value because each study owns its random stream.
    std::size_t threads = 1;

    void validate() const {
        if (n_iter == 0) throw DomainError("mcmc: n_iter must be positive");
        if (burn_in >= n_iter) throw DomainError("mcmc: burn_in must be smaller than n_iter");
        if (thin == 0) throw DomainError("mcmc: thin must be positive");
        if (!(beta > 0.0)) throw DomainError("mcmc: beta must be positive");
        if (!(sigma0_sq > 0.0)) throw DomainError("mcmc: sigma0_sq must be positive");
        if (!(alpha_pos > 0.0) || !(alpha_neg > 0.0)) throw DomainError("mcmc: alpha must be positive");
        if (!(gamma_proposal_sd > 0.0)) throw DomainError("mcmc: gamma_proposal_sd must be positive");
        if (threads == 0) throw DomainError("mcmc: threads must be positive");
    }
};

inline constexpr double kInitThreshold = 1.96;
inline constexpr double kPiClamp = 1e-12;

/// Full latent state of the sampler.
///
/// `labels(g, s)` is the signed component label C: 0 for the null component,
/// +k / -k for the k-th (1-based) table of the positive / negative DP of study
/// s. The DE indicator Y is sign(C) and is derived rather than stored. The
/// component means are integrated out and never represented.
struct ChainState {
    std::size_t genes = 0;
    std::size_t studies = 0;
    Matrix<int> labels;
    std::vector<double> pi;
    std::vector<double> delta;
    double gamma = 0.1;
    std::vector<DpSide> positive;
    std::vector<DpSide> negative;
    Rng global_rng;
    std::vector<Rng> study_rng;
    std::size_t iteration = 0;  // completed sweeps

    int y(std::size_t g, std::size_t s) const {
        const int c = labels(g, s);
        return (c > 0) - (c < 0);
    }

    /// Number of studies with Y != 0 for gene g.
    std::size_t de_count(std::size_t g) const {
        std::size_t k = 0;
        for (int c : labels.row(g)) k += (c != 0);
        return k;
    }
};

inline ChainState init_chain(const Matrix<double>& z, const McmcConfig& cfg) {
    ChainState st;
    st.genes = z.rows();
    st.studies = z.cols();
    if (st.genes == 0 || st.studies == 0) throw DomainError("init_chain: empty Z matrix");
    st.labels = Matrix<int>(st.genes, st.studies, 0);
    st.pi.assign(st.genes, 0.1);
    st.delta.assign(st.genes, 0.5);
    st.gamma = 0.1;
    st.global_rng = Rng(cfg.seed, "mcmc.global");
    for (std::size_t s = 0; s < st.studies; ++s) {
        st.study_rng.emplace_back(cfg.seed, "mcmc.study", s);
        DpSide pos(Side::positive, cfg.alpha_pos, cfg.sigma0_sq);
        DpSide neg(Side::negative, cfg.alpha_neg, cfg.sigma0_sq);
        if (cfg.init == InitMode::threshold) {
            Component up{}, down{};
            for (std::size_t g = 0; g < st.genes; ++g) {
                const double v = z(g, s);
                if (v >= kInitThreshold) {
                    st.labels(g, s) = 1;
                    ++up.count;
                    up.sum_z += v;
                } else if (v <= -kInitThreshold) {
                    st.labels(g, s) = -1;
                    ++down.count;
                    down.sum_z += v;
                }
            }
            if (up.count) pos.set_components({up});
            if (down.count) neg.set_components({down});
        }
        st.positive.push_back(std::move(pos));
        st.negative.push_back(std::move(neg));
    }
    return st;
}

/// pi_g ~ Beta(gamma + k_g, S - k_g + 1 - gamma), k_g = #{s : Y_gs != 0}.
inline void update_pi(ChainState& st) {
    const double S = static_cast<double>(st.studies);
    for (std::size_t g = 0; g < st.genes; ++g) {
        const double k = static_cast<double>(st.de_count(g));
        st.pi[g] = st.global_rng.beta(st.gamma + k, S - k + 1.0 - st.gamma);
    }
}

/// delta_g ~ Beta(beta + #up, beta + #down).
inline void update_delta(ChainState& st, double beta) {
    for (std::size_t g = 0; g < st.genes; ++g) {
        double up = 0.0, down = 0.0;
        for (int c : st.labels.row(g)) {
            up += (c > 0);
            down += (c < 0);
        }
        st.delta[g] = st.global_rng.beta(beta + up, beta + down);
    }
}

namespace detail {

inline double safe_log(double x) {
    return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

// After table `removed` (0-based) of one side is erased, labels above it on
// that side shift down by one.
inline void compact_labels(Matrix<int>& labels, std::size_t s, int sign, std::size_t removed) {
    const int cut = static_cast<int>(removed) + 1;
    for (std::size_t g = 0; g < labels.rows(); ++g) {
        int& c = labels(g, s);
        if (sign > 0 && c > cut) --c;
        if (sign < 0 && c < -cut) ++c;
    }
}

inline void sweep_study(ChainState& st, const Matrix<double>& z, std::size_t s, std::vector<double>& logw) {
    DpSide& pos = st.positive[s];
    DpSide& neg = st.negative[s];
    Rng& rng = st.study_rng[s];

    for (std::size_t g = 0; g < st.genes; ++g) {
        const double x = z(g, s);
        int& c = st.labels(g, s);
        if (c > 0) {
            const auto k = static_cast<std::size_t>(c - 1);
            if (pos.remove(k, x)) compact_labels(st.labels, s, +1, k);
        } else if (c < 0) {
            const auto k = static_cast<std::size_t>(-c - 1);
            if (neg.remove(k, x)) compact_labels(st.labels, s, -1, k);
        }
        c = 0;

        const double pi = st.pi[g];
        const double log_null = safe_log(1.0 - pi) + special::normal_log_pdf(x, 0.0, 1.0);
        const double log_up = safe_log(pi * st.delta[g]);
        const double log_down = safe_log(pi * (1.0 - st.delta[g]));

        // Layout: [null, pos_0..pos_{K+-1}, pos_new, neg_0..neg_{K--1}, neg_new]
        const std::size_t kp = pos.size();
        const std::size_t kn = neg.size();
        logw.resize(kp + kn + 3);
        logw[0] = log_null;
        const bool up_ok = std::isfinite(log_up);
        const bool down_ok = std::isfinite(log_down);
        const double ninf = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kp; ++k)
            logw[1 + k] = up_ok ? log_up + std::log(pos.seat_weight(k)) + pos.log_predictive_existing(k, x) : ninf;
        logw[1 + kp] = up_ok ? log_up + std::log(pos.new_seat_weight()) + pos.log_predictive_new(x) : ninf;
        const std::size_t nb = kp + 2;
        for (std::size_t k = 0; k < kn; ++k)
            logw[nb + k] = down_ok ? log_down + std::log(neg.seat_weight(k)) + neg.log_predictive_existing(k, x) : ninf;
        logw[nb + kn] = down_ok ? log_down + std::log(neg.new_seat_weight()) + neg.log_predictive_new(x) : ninf;

        double hi = ninf;
        for (double w : logw) hi = std::max(hi, w);
        if (!std::isfinite(hi)) throw InternalError("update_assignments: all weights vanish");
        double total = 0.0;
        for (double& w : logw) {
            w = std::exp(w - hi);
            total += w;
        }
        double u = rng.uniform() * total;
        std::size_t pick = logw.size();
        for (std::size_t i = 0; i < logw.size(); ++i) {
            if (u < logw[i]) {
                pick = i;
                break;
            }
            u -= logw[i];
        }
        if (pick == logw.size()) {
            // Round-off walked past the end: take the last slot with mass.
            pick = logw.size() - 1;
            while (logw[pick] == 0.0) --pick;
        }

        if (pick == 0) {
            c = 0;
        } else if (pick <= kp + 1) {
            const std::size_t k = pick - 1;
            c = static_cast<int>(pos.assign(k == kp ? DpSide::kNew : k, x)) + 1;
        } else {
            const std::size_t k = pick - nb;
            c = -(static_cast<int>(neg.assign(k == kn ? DpSide::kNew : k, x)) + 1);
        }
    }
}

} // namespace detail

/// Gibbs update of every C_gs given pi, delta and the other genes' tables.
/// Studies are swept in ascending order with genes inner; with threads > 1
/// studies run concurrently, each drawing from its own stream.
inline void update_assignments(ChainState& st, const Matrix<double>& z, std::size_t threads = 1) {
    if (z.rows() != st.genes || z.cols() != st.studies) throw DomainError("update_assignments: shape mismatch");
    if (threads <= 1 || st.studies == 1) {
        std::vector<double> logw;
        for (std::size_t s = 0; s < st.studies; ++s) detail::sweep_study(st, z, s, logw);
        return;
    }
    const std::size_t workers = std::min(threads, st.studies);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&st, &z, w, workers] {
            std::vector<double> logw;
            for (std::size_t s = w; s < st.studies; s += workers) detail::sweep_study(st, z, s, logw);
        });
    }
    for (auto& t : pool) t.join();
}

/// log of prod_g dBeta(pi_g; gamma, 1 - gamma) as a function of gamma, with
/// the per-gene sums precomputed.
struct GammaTarget {
    double sum_log_pi = 0.0;
    double sum_log_1m_pi = 0.0;
    double genes = 0.0;

    explicit GammaTarget(const std::vector<double>& pi) : genes(static_cast<double>(pi.size())) {
        for (double p : pi) {
            const double c = std::clamp(p, kPiClamp, 1.0 - kPiClamp);
            sum_log_pi += std::log(c);
            sum_log_1m_pi += std::log1p(-c);
        }
    }

    double operator()(double gamma) const {
        return (gamma - 1.0) * sum_log_pi - gamma * sum_log_1m_pi -
               genes * (std::lgamma(gamma) + std::lgamma(1.0 - gamma));
    }
};

/// One random-walk Metropolis-Hastings step for gamma on the logit scale under
/// a uniform prior. Returns whether the proposal was accepted.
inline bool update_gamma(ChainState& st, const McmcConfig& cfg) {
    const GammaTarget target(st.pi);
    const double cur = st.gamma;
    const double x = std::log(cur) - std::log1p(-cur);
    const double xp = x + cfg.gamma_proposal_sd * st.global_rng.normal();
    const double prop = 1.0 / (1.0 + std::exp(-xp));
    if (!(prop > 0.0 && prop < 1.0)) {
        st.global_rng.uniform();
        return false;
    }
    // The logit Jacobian contributes log(gamma (1 - gamma)).
    const double log_ratio = (target(prop) + std::log(prop) + std::log1p(-prop)) -
                             (target(cur) + std::log(cur) + std::log1p(-cur));
    if (std::log(st.global_rng.uniform()) < log_ratio) {
        st.gamma = prop;
        return true;
    }
    return false;
}

/// Tallies of retained samples.
struct PosteriorAccumulator {
    std::size_t genes = 0;
    std::size_t studies = 0;
    Matrix<std::uint32_t> count_pos;
    Matrix<std::uint32_t> count_neg;
    Matrix<std::uint32_t> count_null;
    /// de_count_hist(g, k): retained samples in which exactly k studies had Y != 0.
    Matrix<std::uint32_t> de_count_hist;
    std::size_t n_samples = 0;
    std::vector<double> trace_gamma;
    std::vector<double> trace_mean_pi;
    std::size_t gamma_accepted = 0;

    PosteriorAccumulator() = default;
    PosteriorAccumulator(std::size_t g, std::size_t s)
        : genes(g), studies(s), count_pos(g, s, 0), count_neg(g, s, 0), count_null(g, s, 0),
          de_count_hist(g, s + 1, 0) {}

    void record(const ChainState& st) {
        for (std::size_t g = 0; g < genes; ++g) {
            std::size_t k = 0;
            for (std::size_t s = 0; s < studies; ++s) {
                const int y = st.y(g, s);
                if (y > 0) {
                    ++count_pos(g, s);
                    ++k;
                } else if (y < 0) {
                    ++count_neg(g, s);
                    ++k;
                } else {
                    ++count_null(g, s);
                }
            }
            ++de_count_hist(g, k);
        }
        ++n_samples;
    }

    double prob_pos(std::size_t g, std::size_t s) const { return ratio(count_pos(g, s)); }
    double prob_neg(std::size_t g, std::size_t s) const { return ratio(count_neg(g, s)); }
    double prob_null(std::size_t g, std::size_t s) const { return ratio(count_null(g, s)); }

    double gamma_acceptance_rate() const {
        return trace_gamma.empty() ? 0.0
                                   : static_cast<double>(gamma_accepted) / static_cast<double>(trace_gamma.size());
    }

private:
    double ratio(std::uint32_t c) const {
        if (n_samples == 0) throw DomainError("posterior: no retained samples");
        return static_cast<double>(c) / static_cast<double>(n_samples);
    }
};

/// One full sweep in the fixed order pi, delta, C, gamma.
inline bool sweep(ChainState& st, const Matrix<double>& z, const McmcConfig& cfg) {
    update_pi(st);
    update_delta(st, cfg.beta);
    update_assignments(st, z, cfg.threads);
    const bool accepted = update_gamma(st, cfg);
    ++st.iteration;
    return accepted;
}

} // namespace metapat
