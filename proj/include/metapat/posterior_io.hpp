#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/io.hpp"
#include "metapat/mcmc.hpp"
#include "metapat/tsv.hpp"

namespace metapat {

/// Posterior tallies together with the labels they refer to.
struct Posterior {
    PosteriorAccumulator acc;
    std::vector<std::string> gene_ids;
    std::vector<std::string> study_ids;
};

namespace detail {
inline void write_prob(const std::string& path, const Posterior& post, const Matrix<std::uint32_t>& counts,
                       const Provenance& prov) {
    TableMatrix m;
    m.gene_ids = post.gene_ids;
    m.study_ids = post.study_ids;
    m.values = Matrix<double>(counts.rows(), counts.cols());
    const double n = static_cast<double>(post.acc.n_samples);
    for (std::size_t g = 0; g < counts.rows(); ++g)
        for (std::size_t s = 0; s < counts.cols(); ++s)
            m.values(g, s) = n > 0 ? static_cast<double>(counts(g, s)) / n : 0.0;
    write_matrix(path, m, prov);
}
} // namespace detail

/// Writes posterior_prob_{pos,neg,null}.tsv, de_count_hist.tsv and
/// trace_gamma.tsv into `dir`.
inline void write_posterior(const std::string& dir, const Posterior& post, const Provenance& prov) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& acc = post.acc;
    detail::write_prob((fs::path(dir) / "posterior_prob_pos.tsv").string(), post, acc.count_pos, prov);
    detail::write_prob((fs::path(dir) / "posterior_prob_neg.tsv").string(), post, acc.count_neg, prov);
    detail::write_prob((fs::path(dir) / "posterior_prob_null.tsv").string(), post, acc.count_null, prov);

    {
        tsv::Writer w((fs::path(dir) / "de_count_hist.tsv").string(), prov);
        std::vector<std::string> head{"gene_id"};
        for (std::size_t k = 0; k <= acc.studies; ++k) head.push_back("k" + std::to_string(k));
        w.row(head);
        for (std::size_t g = 0; g < acc.genes; ++g) {
            std::vector<std::string> row{post.gene_ids[g]};
            for (std::size_t k = 0; k <= acc.studies; ++k) row.push_back(std::to_string(acc.de_count_hist(g, k)));
            w.row(row);
        }
        w.close();
    }
    {
        tsv::Writer w((fs::path(dir) / "trace_gamma.tsv").string(), prov);
        w.row({"iteration", "gamma", "mean_pi"});
        for (std::size_t i = 0; i < acc.trace_gamma.size(); ++i)
            w.row({std::to_string(i + 1), tsv::fmt(acc.trace_gamma[i]), tsv::fmt(acc.trace_mean_pi[i])});
        w.close();
    }
}

/// Rebuilds the tallies from a directory written by write_posterior.
inline Posterior read_posterior(const std::string& dir) {
    namespace fs = std::filesystem;
    Posterior post;
    const auto hist_table = tsv::read_file((fs::path(dir) / "de_count_hist.tsv").string());
    const auto pos = read_matrix((fs::path(dir) / "posterior_prob_pos.tsv").string());
    const auto neg = read_matrix((fs::path(dir) / "posterior_prob_neg.tsv").string());
    const auto null = read_matrix((fs::path(dir) / "posterior_prob_null.tsv").string());
    const std::size_t G = pos.genes(), S = pos.studies();
    if (neg.genes() != G || null.genes() != G || neg.studies() != S || null.studies() != S)
        throw FormatError(dir + ": posterior probability files disagree in shape");
    if (hist_table.rows.size() != G || hist_table.header.size() != S + 2)
        throw FormatError(dir + ": de_count_hist.tsv does not match the probability files");

    post.gene_ids = pos.gene_ids;
    post.study_ids = pos.study_ids;
    post.acc = PosteriorAccumulator(G, S);
    std::size_t n = 0;
    for (std::size_t g = 0; g < G; ++g) {
        if (hist_table.rows[g].size() != S + 2 || hist_table.rows[g][0] != post.gene_ids[g])
            throw FormatError(dir + ": de_count_hist.tsv row " + std::to_string(g + 1) + " is inconsistent");
        std::size_t row_total = 0;
        for (std::size_t k = 0; k <= S; ++k) {
            const auto v = tsv::to_double(hist_table.rows[g][k + 1]);
            if (!v || *v < 0) throw ParseError(dir + ": bad count in de_count_hist.tsv");
            const auto c = static_cast<std::uint32_t>(*v);
            post.acc.de_count_hist(g, k) = c;
            row_total += c;
        }
        if (g == 0) n = row_total;
        else if (row_total != n) throw FormatError(dir + ": de_count_hist.tsv rows have different totals");
    }
    post.acc.n_samples = n;
    const double dn = static_cast<double>(n);
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t s = 0; s < S; ++s) {
            post.acc.count_pos(g, s) = static_cast<std::uint32_t>(std::llround(pos.values(g, s) * dn));
            post.acc.count_neg(g, s) = static_cast<std::uint32_t>(std::llround(neg.values(g, s) * dn));
            post.acc.count_null(g, s) = static_cast<std::uint32_t>(std::llround(null.values(g, s) * dn));
        }
    return post;
}

} // namespace metapat
