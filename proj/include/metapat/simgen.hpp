#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/matrix.hpp"
#include "metapat/rng.hpp"
#include "metapat/special.hpp"
#include "metapat/tsv.hpp"

namespace metapat::sim {

enum class Scenario { general, metapattern, unbalanced_a, unbalanced_b, unbalanced_c, unbalanced_d };

inline Scenario parse_scenario(const std::string& s) {
    if (s == "general") return Scenario::general;
    if (s == "metapattern") return Scenario::metapattern;
    if (s == "unbalanced-a") return Scenario::unbalanced_a;
    if (s == "unbalanced-b") return Scenario::unbalanced_b;
    if (s == "unbalanced-c") return Scenario::unbalanced_c;
    if (s == "unbalanced-d") return Scenario::unbalanced_d;
    throw DomainError("unknown scenario '" + s + "'");
}

inline std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::general: return "general";
        case Scenario::metapattern: return "metapattern";
        case Scenario::unbalanced_a: return "unbalanced-a";
        case Scenario::unbalanced_b: return "unbalanced-b";
        case Scenario::unbalanced_c: return "unbalanced-c";
        case Scenario::unbalanced_d: return "unbalanced-d";
    }
    return "?";
}

struct SimConfig {
    std::size_t genes = 10000;
    std::size_t studies = 3;
    std::vector<std::size_t> n_cases{20, 20, 20};
    std::vector<std::size_t> n_controls{20, 20, 20};
    double sigma = 1.0;
    /// Number of correlated gene clusters; 0 means genes / 50 (200 at 10,000 genes).
    std::size_t n_clusters = 0;
    std::size_t cluster_size = 20;
    double wishart_df = 60.0;
    /// Off-diagonal of the inverse-Wishart scale matrix (diagonal is 1).
    double psi_offdiag = 0.5;
    double de_fraction = 0.30;
    Scenario scenario = Scenario::general;
    std::uint64_t seed = 1;

    std::size_t effective_clusters() const { return n_clusters ? n_clusters : genes / 50; }

    /// Applies the study count and per-study group sizes a scenario fixes.
    static SimConfig for_scenario(Scenario sc, SimConfig base) {
        base.scenario = sc;
        auto set = [&](std::vector<std::size_t> cases, std::vector<std::size_t> controls) {
            base.studies = cases.size();
            base.n_cases = std::move(cases);
            base.n_controls = std::move(controls);
        };
        switch (sc) {
            case Scenario::general:
                base.n_cases.assign(base.studies, base.n_cases.empty() ? 20 : base.n_cases.front());
                base.n_controls.assign(base.studies, base.n_controls.empty() ? 20 : base.n_controls.front());
                break;
            case Scenario::metapattern:
                set({20, 20, 20, 20}, {20, 20, 20, 20});
                base.sigma = 1.0;
                break;
            case Scenario::unbalanced_a: set({20, 30, 40}, {20, 30, 40}); break;
            case Scenario::unbalanced_b: set({20, 50, 100}, {20, 50, 100}); break;
            case Scenario::unbalanced_c: set({60, 60, 60}, {20, 20, 20}); break;
            case Scenario::unbalanced_d: set({20, 40, 60}, {60, 40, 20}); break;
        }
        return base;
    }

    void validate() const {
        if (genes == 0 || studies == 0) throw DomainError("simulate: genes and studies must be positive");
        if (n_cases.size() != studies || n_controls.size() != studies)
            throw DomainError("simulate: need one case and control count per study");
        for (std::size_t s = 0; s < studies; ++s)
            if (n_cases[s] < 2 || n_controls[s] < 2) throw DomainError("simulate: groups need at least 2 samples");
        if (effective_clusters() * cluster_size > genes)
            throw DomainError("simulate: clusters * cluster_size exceeds the number of genes");
        if (!(wishart_df > static_cast<double>(cluster_size) + 1.0))
            throw DomainError("simulate: wishart_df must exceed cluster_size + 1");
        if (!(de_fraction >= 0.0 && de_fraction < 1.0)) throw DomainError("simulate: de_fraction must be in [0, 1)");
        if (!(sigma > 0.0)) throw DomainError("simulate: sigma must be positive");
        if (scenario == Scenario::metapattern && studies < 2)
            throw DomainError("simulate: metapattern scenario needs at least 2 studies");
    }
};

/// Per-study expression: genes by samples, controls first.
struct ExpressionSet {
    std::vector<Matrix<double>> expr;
    std::vector<std::size_t> n_controls;
    std::vector<std::size_t> n_cases;

    std::size_t studies() const { return expr.size(); }
    std::size_t genes() const { return expr.empty() ? 0 : expr.front().rows(); }
};

struct SimTruth {
    std::vector<bool> is_de;
    Matrix<std::uint8_t> de_mask;  // gene x study: 1 when the gene carries an effect in that study
    std::vector<double> theta_g;   // gene-level effect size (0 for non-DE)
    Matrix<double> theta_gs;       // study-level effect magnitude (0 outside the DE studies)
    std::vector<int> direction;    // d_g: effect sign is (-1)^d_g
    std::vector<int> cluster;      // 0 = uncorrelated, otherwise 1-based cluster id
    std::vector<std::string> pattern;

    std::size_t genes() const { return is_de.size(); }
    std::size_t studies() const { return de_mask.cols(); }
    std::size_t de_studies(std::size_t g) const {
        std::size_t k = 0;
        for (auto v : de_mask.row(g)) k += v;
        return k;
    }
    bool operator==(const SimTruth&) const = default;
};

struct SimData {
    ExpressionSet es;
    SimTruth truth;
};

inline std::string gene_id(std::size_t g) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "g%05zu", g + 1);
    return buf;
}

inline std::string study_id(std::size_t s) { return "study" + std::to_string(s + 1); }

/// Covariance for one cluster in one study: an inverse-Wishart draw with
/// scale Psi = (1 - c) I + c J, standardized to unit diagonal and scaled by
/// sigma^2. The Wishart of the inverted scale is drawn with the Bartlett
/// decomposition and then inverted.
inline Eigen::MatrixXd sample_cov(const SimConfig& cfg, Rng& rng) {
    const auto p = static_cast<Eigen::Index>(cfg.cluster_size);
    if (!(cfg.wishart_df > static_cast<double>(p) + 1.0))
        throw DomainError("sample_cov: wishart_df must exceed dimension + 1");
    Eigen::MatrixXd psi = Eigen::MatrixXd::Constant(p, p, cfg.psi_offdiag);
    psi.diagonal().setOnes();
    const Eigen::MatrixXd psi_inv = psi.inverse();
    const Eigen::MatrixXd L = psi_inv.llt().matrixL();

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        A(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (cfg.wishart_df - static_cast<double>(i))));
        for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rng.normal();
    }
    const Eigen::MatrixXd LA = L * A;
    const Eigen::MatrixXd W = LA * LA.transpose();
    Eigen::MatrixXd iw = W.llt().solve(Eigen::MatrixXd::Identity(p, p));
    iw = (0.5 * (iw + iw.transpose())).eval();

    const Eigen::VectorXd sd = iw.diagonal().cwiseSqrt();
    Eigen::MatrixXd corr = iw.array() / (sd * sd.transpose()).array();
    corr.diagonal().setOnes();
    Eigen::MatrixXd sigma = cfg.sigma * cfg.sigma * corr;

    if (sigma.llt().info() != Eigen::Success) {
        sigma.diagonal().array() += 1e-10;
        if (sigma.llt().info() != Eigen::Success) throw DomainError("sample_cov: covariance is not positive definite");
    }
    return sigma;
}

namespace detail {

// Null expression X' for all genes in all studies.
inline ExpressionSet background(const SimConfig& cfg, const std::vector<int>& cluster_of,
                                const std::vector<std::vector<std::size_t>>& members) {
    ExpressionSet es;
    es.n_cases = cfg.n_cases;
    es.n_controls = cfg.n_controls;
    for (std::size_t s = 0; s < cfg.studies; ++s) {
        const std::size_t n = cfg.n_cases[s] + cfg.n_controls[s];
        Matrix<double> x(cfg.genes, n, 0.0);

        Rng noise(cfg.seed, "sim.noise", s);
        for (std::size_t g = 0; g < cfg.genes; ++g) {
            if (cluster_of[g] != 0) continue;
            for (std::size_t i = 0; i < n; ++i) x(g, i) = noise.normal(0.0, cfg.sigma);
        }
        for (std::size_t c = 0; c < members.size(); ++c) {
            const std::uint64_t block = c * cfg.studies + s;
            Rng cov_rng(cfg.seed, "sim.cov", block);
            const Eigen::MatrixXd L = sample_cov(cfg, cov_rng).llt().matrixL();
            Rng draw(cfg.seed, "sim.mvn", block);
            Eigen::VectorXd e(L.rows());
            for (std::size_t i = 0; i < n; ++i) {
                for (Eigen::Index t = 0; t < e.size(); ++t) e(t) = draw.normal();
                const Eigen::VectorXd v = L * e;
                for (std::size_t t = 0; t < members[c].size(); ++t)
                    x(members[c][t], i) = v(static_cast<Eigen::Index>(t));
            }
        }
        es.expr.push_back(std::move(x));
    }
    return es;
}

inline void layout_clusters(const SimConfig& cfg, std::vector<int>& cluster_of,
                            std::vector<std::vector<std::size_t>>& members) {
    // Cluster membership is a random subset, independent of DE status.
    std::vector<std::size_t> perm(cfg.genes);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(cfg.seed, "sim.layout");
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    cluster_of.assign(cfg.genes, 0);
    members.assign(cfg.effective_clusters(), {});
    std::size_t pos = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
        for (std::size_t t = 0; t < cfg.cluster_size; ++t) {
            const std::size_t g = perm[pos++];
            cluster_of[g] = static_cast<int>(c + 1);
            members[c].push_back(g);
        }
        std::sort(members[c].begin(), members[c].end());
    }
}

inline SimTruth empty_truth(const SimConfig& cfg, const std::vector<int>& cluster_of) {
    SimTruth t;
    t.is_de.assign(cfg.genes, false);
    t.de_mask = Matrix<std::uint8_t>(cfg.genes, cfg.studies, 0);
    t.theta_g.assign(cfg.genes, 0.0);
    t.theta_gs = Matrix<double>(cfg.genes, cfg.studies, 0.0);
    t.direction.assign(cfg.genes, 0);
    t.cluster = cluster_of;
    t.pattern.assign(cfg.genes, "nonDE");
    return t;
}

// theta_g ~ N(1, 1) truncated to (0.5, inf); theta_gs ~ N(theta_g, 0.2^2) truncated to (0, inf).
inline void draw_effects(SimTruth& t, std::size_t g, Rng& rng) {
    t.is_de[g] = true;
    t.theta_g[g] = rng.truncated_normal_above(1.0, 1.0, 0.5);
    for (std::size_t s = 0; s < t.studies(); ++s)
        if (t.de_mask(g, s)) t.theta_gs(g, s) = rng.truncated_normal_above(t.theta_g[g], 0.2, 0.0);
}

inline void add_effects(ExpressionSet& es, const SimTruth& t) {
    for (std::size_t s = 0; s < es.studies(); ++s) {
        const std::size_t n0 = es.n_controls[s];
        auto& x = es.expr[s];
        for (std::size_t g = 0; g < t.genes(); ++g) {
            if (!t.de_mask(g, s)) continue;
            const double shift = (t.direction[g] ? -1.0 : 1.0) * t.theta_gs(g, s);
            for (std::size_t i = n0; i < x.cols(); ++i) x(g, i) += shift;
        }
    }
}

} // namespace detail

/// General scenario: the first de_fraction * G genes are DE in a uniformly
/// sized random subset of studies, with a common direction per gene.
inline SimData generate(const SimConfig& cfg) {
    cfg.validate();
    std::vector<int> cluster_of;
    std::vector<std::vector<std::size_t>> members;
    detail::layout_clusters(cfg, cluster_of, members);

    SimData out;
    out.truth = detail::empty_truth(cfg, cluster_of);
    const auto n_de = static_cast<std::size_t>(std::llround(cfg.de_fraction * static_cast<double>(cfg.genes)));
    Rng rng(cfg.seed, "sim.de");
    std::vector<std::size_t> studies(cfg.studies);
    for (std::size_t g = 0; g < n_de; ++g) {
        const std::size_t v = 1 + rng.below(cfg.studies);
        std::iota(studies.begin(), studies.end(), std::size_t{0});
        for (std::size_t i = 0; i < v; ++i) std::swap(studies[i], studies[i + rng.below(cfg.studies - i)]);
        for (std::size_t i = 0; i < v; ++i) out.truth.de_mask(g, studies[i]) = 1;
        detail::draw_effects(out.truth, g, rng);
        out.truth.direction[g] = rng.uniform() < 0.5 ? 1 : 0;
        out.truth.pattern[g] = "DE" + std::to_string(v);
    }
    out.es = detail::background(cfg, cluster_of, members);
    detail::add_effects(out.es, out.truth);
    return out;
}

/// Meta-pattern scenario: 4% of genes concordant in every study (half up,
/// half down) and 4% DE in a single study, split evenly among up/down in
/// study 1 and up/down in study 2.
inline SimData generate_metapattern(const SimConfig& cfg) {
    cfg.validate();
    std::vector<int> cluster_of;
    std::vector<std::vector<std::size_t>> members;
    detail::layout_clusters(cfg, cluster_of, members);

    SimData out;
    out.truth = detail::empty_truth(cfg, cluster_of);
    const auto homo = static_cast<std::size_t>(std::llround(0.04 * static_cast<double>(cfg.genes)));
    const std::size_t ssp = homo;
    Rng rng(cfg.seed, "sim.de");
    std::size_t g = 0;
    auto emit = [&](std::size_t count, const std::string& label, int dir, int only_study) {
        for (std::size_t i = 0; i < count; ++i, ++g) {
            for (std::size_t s = 0; s < cfg.studies; ++s)
                out.truth.de_mask(g, s) = (only_study < 0 || static_cast<int>(s) == only_study) ? 1 : 0;
            detail::draw_effects(out.truth, g, rng);
            out.truth.direction[g] = dir;
            out.truth.pattern[g] = label;
        }
    };
    emit(homo / 2, "homo+", 0, -1);
    emit(homo - homo / 2, "homo-", 1, -1);
    emit(ssp / 4, "ssp1+", 0, 0);
    emit(ssp / 4, "ssp1-", 1, 0);
    emit(ssp / 4, "ssp2+", 0, 1);
    emit(ssp - 3 * (ssp / 4), "ssp2-", 1, 1);

    out.es = detail::background(cfg, cluster_of, members);
    detail::add_effects(out.es, out.truth);
    return out;
}

inline SimData simulate(const SimConfig& cfg) {
    return cfg.scenario == Scenario::metapattern ? generate_metapattern(cfg) : generate(cfg);
}

struct TTestResult {
    Matrix<double> p2;   // two-sided Welch p-values
    Matrix<int> sign;    // sign of (case mean - control mean), +1 on ties
    Matrix<double> diff;  // case mean - control mean
};

struct WelchStat {
    double t = 0.0;
    double df = 0.0;
    double diff = 0.0;
    double p = 1.0;
};

inline WelchStat welch(std::span<const double> control, std::span<const double> cases) {
    auto moments = [](std::span<const double> v) {
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair{mean, ss / (n - 1.0)};
    };
    const auto [m0, v0] = moments(control);
    const auto [m1, v1] = moments(cases);
    const double a = v0 / static_cast<double>(control.size());
    const double b = v1 / static_cast<double>(cases.size());
    WelchStat w;
    w.diff = m1 - m0;
    const double se2 = a + b;
    if (se2 <= 0.0) {
        w.t = w.diff == 0.0 ? 0.0 : std::copysign(INFINITY, w.diff);
        w.df = static_cast<double>(control.size() + cases.size() - 2);
        w.p = w.diff == 0.0 ? 1.0 : 0.0;
        return w;
    }
    w.t = w.diff / std::sqrt(se2);
    w.df = se2 * se2 /
           (a * a / (static_cast<double>(control.size()) - 1.0) + b * b / (static_cast<double>(cases.size()) - 1.0));
    w.p = special::student_t_two_sided(w.t, w.df);
    return w;
}

/// Per gene and study Welch two-sample test, cases versus controls.
inline TTestResult t_test_pvalues(const ExpressionSet& es) {
    const std::size_t G = es.genes();
    const std::size_t S = es.studies();
    TTestResult r{Matrix<double>(G, S), Matrix<int>(G, S), Matrix<double>(G, S)};
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t n0 = es.n_controls[s];
        for (std::size_t g = 0; g < G; ++g) {
            auto row = es.expr[s].row(g);
            const auto w = welch(row.subspan(0, n0), row.subspan(n0));
            r.p2(g, s) = std::max(w.p, 1e-300);
            r.sign(g, s) = w.diff >= 0.0 ? 1 : -1;
            r.diff(g, s) = w.diff;
        }
    }
    return r;
}

inline void write_truth(const std::string& path, const SimTruth& t, const Provenance& prov) {
    tsv::Writer w(path, prov);
    std::vector<std::string> head{"gene_id", "is_de", "pattern", "direction", "cluster", "theta_g"};
    for (std::size_t s = 0; s < t.studies(); ++s) head.push_back("de_" + study_id(s));
    for (std::size_t s = 0; s < t.studies(); ++s) head.push_back("theta_" + study_id(s));
    w.row(head);
    for (std::size_t g = 0; g < t.genes(); ++g) {
        std::vector<std::string> row{gene_id(g),
                                     t.is_de[g] ? "1" : "0",
                                     t.pattern[g],
                                     std::to_string(t.direction[g]),
                                     std::to_string(t.cluster[g]),
                                     tsv::fmt_exact(t.theta_g[g])};
        for (std::size_t s = 0; s < t.studies(); ++s) row.push_back(std::to_string(t.de_mask(g, s)));
        for (std::size_t s = 0; s < t.studies(); ++s) row.push_back(tsv::fmt_exact(t.theta_gs(g, s)));
        w.row(row);
    }
    w.close();
}

inline SimTruth read_truth(const std::string& path, std::vector<std::string>* gene_ids = nullptr) {
    const auto table = tsv::read_file(path);
    if (table.header.size() < 8 || (table.header.size() - 6) % 2 != 0 || table.header[0] != "gene_id")
        throw FormatError(path + ": not a truth file");
    const std::size_t S = (table.header.size() - 6) / 2;
    const std::size_t G = table.rows.size();
    SimTruth t;
    t.is_de.resize(G);
    t.de_mask = Matrix<std::uint8_t>(G, S);
    t.theta_g.resize(G);
    t.theta_gs = Matrix<double>(G, S);
    t.direction.resize(G);
    t.cluster.resize(G);
    t.pattern.resize(G);
    auto num = [&](const std::string& cell, std::size_t g) {
        auto v = tsv::to_double(cell);
        if (!v) throw ParseError(path + ": bad number '" + cell + "' on line " + std::to_string(table.line_numbers[g]));
        return *v;
    };
    for (std::size_t g = 0; g < G; ++g) {
        const auto& row = table.rows[g];
        if (row.size() != table.header.size())
            throw FormatError(path + ": ragged row on line " + std::to_string(table.line_numbers[g]));
        if (gene_ids) gene_ids->push_back(row[0]);
        t.is_de[g] = row[1] == "1";
        t.pattern[g] = row[2];
        t.direction[g] = static_cast<int>(num(row[3], g));
        t.cluster[g] = static_cast<int>(num(row[4], g));
        t.theta_g[g] = num(row[5], g);
        for (std::size_t s = 0; s < S; ++s) t.de_mask(g, s) = row[6 + s] == "1" ? 1 : 0;
        for (std::size_t s = 0; s < S; ++s) t.theta_gs(g, s) = num(row[6 + S + s], g);
    }
    return t;
}

inline void write_expression(const std::string& path, const ExpressionSet& es, std::size_t s, const Provenance& prov) {
    tsv::Writer w(path, prov);
    std::vector<std::string> head{"gene_id"};
    for (std::size_t i = 0; i < es.n_controls[s]; ++i) head.push_back("control" + std::to_string(i + 1));
    for (std::size_t i = 0; i < es.n_cases[s]; ++i) head.push_back("case" + std::to_string(i + 1));
    w.row(head);
    std::vector<std::string> row;
    for (std::size_t g = 0; g < es.genes(); ++g) {
        row.assign(1, gene_id(g));
        for (double v : es.expr[s].row(g)) row.push_back(tsv::fmt(v));
        w.row(row);
    }
    w.close();
}

} // namespace metapat::sim
