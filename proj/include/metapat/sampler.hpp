#pragma once

#include <numeric>
#include <optional>
#include <string>

#include "metapat/checkpoint.hpp"
#include "metapat/mcmc.hpp"

namespace metapat {

struct RunOptions {
    /// Snapshot target; written every `checkpoint_every` sweeps when both are set.
    std::string checkpoint_path;
    std::size_t checkpoint_every = 0;
    /// Continue from a snapshot instead of initializing.
    std::optional<std::string> resume_from;
};

/// Runs init followed by n_iter sweeps. After burn-in every thin-th state is
/// tallied; gamma and mean(pi) are traced at every sweep.
inline PosteriorAccumulator run(const Matrix<double>& z, const McmcConfig& cfg, const RunOptions& opts = {}) {
    cfg.validate();
    ChainState st;
    PosteriorAccumulator acc;
    if (opts.resume_from) {
        auto snap = checkpoint::read(*opts.resume_from);
        if (snap.state.genes != z.rows() || snap.state.studies != z.cols())
            throw DomainError("resume: checkpoint shape does not match the input matrix");
        if (snap.seed != cfg.seed) throw DomainError("resume: checkpoint was written with a different seed");
        st = std::move(snap.state);
        acc = std::move(snap.acc);
    } else {
        st = init_chain(z, cfg);
        acc = PosteriorAccumulator(st.genes, st.studies);
        acc.trace_gamma.reserve(cfg.n_iter);
        acc.trace_mean_pi.reserve(cfg.n_iter);
    }

    while (st.iteration < cfg.n_iter) {
        if (sweep(st, z, cfg)) ++acc.gamma_accepted;
        acc.trace_gamma.push_back(st.gamma);
        acc.trace_mean_pi.push_back(std::accumulate(st.pi.begin(), st.pi.end(), 0.0) /
                                    static_cast<double>(st.genes));
        const std::size_t it = st.iteration;  // 1-based index of the sweep just finished
        if (it > cfg.burn_in && (it - cfg.burn_in - 1) % cfg.thin == 0) acc.record(st);
        if (opts.checkpoint_every && !opts.checkpoint_path.empty() && it % opts.checkpoint_every == 0)
            checkpoint::write(opts.checkpoint_path, st, acc, cfg);
    }
    return acc;
}

template <class Tag>
PosteriorAccumulator run(const LabeledMatrix<Tag>& z, const McmcConfig& cfg, const RunOptions& opts = {}) {
    return run(z.values, cfg, opts);
}

} // namespace metapat
