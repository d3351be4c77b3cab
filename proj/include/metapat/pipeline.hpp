#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <sstream>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metapat/baselines.hpp"
#include "metapat/inference.hpp"
#include "metapat/io.hpp"
#include "metapat/metrics.hpp"
#include "metapat/sampler.hpp"
#include "metapat/simgen.hpp"

namespace metapat {

/// Ranking score for baselines. -log p orders genes exactly as 1 - p does but
/// keeps resolution for p below machine epsilon.
inline double baseline_score(double p) { return -std::log(std::max(p, 1e-300)); }

/// One-sided Z input for the sampler from two-sided p-values and effect signs.
inline ZMatrix z_from_ttest(const sim::TTestResult& tt) {
    TableMatrix p2;
    p2.values = tt.p2;
    for (std::size_t g = 0; g < tt.p2.rows(); ++g) p2.gene_ids.push_back(sim::gene_id(g));
    for (std::size_t s = 0; s < tt.p2.cols(); ++s) p2.study_ids.push_back(sim::study_id(s));
    auto p1 = two_sided_to_one_sided(p2, tt.sign);
    validate_pvalues(p1, "t-test", nullptr);
    return p_to_z(p1);
}

struct MethodEval {
    std::string space;
    std::string method;
    EvalReport report;
};

/// (decision space, method) pairs of the comparison table.
inline const std::vector<std::pair<std::string, std::string>>& comparison_pairs() {
    static const std::vector<std::pair<std::string, std::string>> pairs = {
        {"Abar", "bayesmp"}, {"Abar", "maxp"}, {"B", "bayesmp"},   {"B", "fisher"},
        {"B", "aw"},         {"rbar", "bayesmp"}, {"rbar", "rop"},
    };
    return pairs;
}

inline MethodEval evaluate_bayesmp(const PosteriorAccumulator& acc, const sim::SimTruth& truth,
                                   const DecisionSpace& space, double fdr) {
    const auto xi = compute_xi(acc, space);
    const auto dec = bayes_fdr_declare(xi, fdr);
    std::vector<double> score(xi.size());
    for (std::size_t g = 0; g < xi.size(); ++g) score[g] = 1.0 - xi[g];
    return {space.name(), "bayesmp", evaluate(dec.declared, score, truth_label(truth, space), space)};
}

inline std::vector<double> combine_all(baselines::Method m, const Matrix<double>& p2, std::size_t r) {
    std::vector<double> out(p2.rows());
    for (std::size_t g = 0; g < p2.rows(); ++g) out[g] = baselines::combine(m, p2.row(g), r);
    return out;
}

inline MethodEval evaluate_baseline(baselines::Method m, const Matrix<double>& p2, const sim::SimTruth& truth,
                                    const DecisionSpace& space, double fdr) {
    const auto p = combine_all(m, p2, space.kind == DecisionSpace::Kind::Rbar ? space.r : 0);
    const auto declared = baselines::bh_fdr(p, fdr);
    std::vector<double> score(p.size());
    for (std::size_t g = 0; g < p.size(); ++g) score[g] = baseline_score(p[g]);
    return {space.name(), baselines::method_name(m), evaluate(declared, score, truth_label(truth, space), space)};
}

struct ReplicateResult {
    std::size_t studies = 0;
    double sigma = 0.0;
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::vector<MethodEval> evals;
    double gamma_acceptance = 0.0;
    bool ok = false;
    std::string error;
};

/// simulate -> Welch test -> sampler -> all decision spaces -> baselines -> metrics.
inline ReplicateResult run_replicate(const sim::SimConfig& sim_cfg, const McmcConfig& mcmc, double fdr) {
    ReplicateResult out;
    out.studies = sim_cfg.studies;
    out.sigma = sim_cfg.sigma;
    out.seed = sim_cfg.seed;
    const auto data = sim::simulate(sim_cfg);
    const auto tt = sim::t_test_pvalues(data.es);
    const auto z = z_from_ttest(tt);
    const auto acc = run(z, mcmc);
    out.gamma_acceptance = acc.gamma_acceptance_rate();

    const std::size_t S = sim_cfg.studies;
    const DecisionSpace spaces[] = {DecisionSpace::Abar(), DecisionSpace::B(),
                                    DecisionSpace::Rbar(DecisionSpace::default_r(S))};
    for (const auto& [space_name, method] : comparison_pairs()) {
        DecisionSpace space = spaces[0];
        for (const auto& sp : spaces)
            if (sp.name() == space_name) space = sp;
        if (method == "bayesmp") out.evals.push_back(evaluate_bayesmp(acc, data.truth, space, fdr));
        else out.evals.push_back(evaluate_baseline(baselines::parse_method(method), tt.p2, data.truth, space, fdr));
    }
    out.ok = true;
    return out;
}

struct BenchSpec {
    sim::SimConfig base;  // genes, scenario, de_fraction and cluster settings
    std::vector<std::size_t> studies{3};
    std::vector<double> sigmas{1.0};
    std::size_t seeds = 2;
    std::uint64_t seed = 42;
    McmcConfig mcmc;
    double fdr = 0.05;
    std::size_t threads = 1;
};

struct SummaryRow {
    std::size_t studies = 0;
    double sigma = 0.0;
    std::string space;
    std::string method;
    std::size_t n_ok = 0;
    double fdr_mean = 0, fdr_sd = 0, fnr_mean = 0, fnr_sd = 0, auc_mean = 0, auc_sd = 0, declared_mean = 0;
};

struct BenchResult {
    std::vector<ReplicateResult> replicates;
    std::vector<SummaryRow> summary;
    bool all_ok = true;
};

inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t studies, double sigma, std::size_t index) {
    return stream_seed(master, "bench:S=" + std::to_string(studies) + ":sigma=" + tsv::fmt(sigma), index);
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {NAN, NAN};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline std::vector<SummaryRow> summarize(const BenchSpec& spec, const std::vector<ReplicateResult>& reps) {
    std::vector<SummaryRow> rows;
    for (std::size_t S : spec.studies) {
        for (double sigma : spec.sigmas) {
            for (std::size_t pi = 0; pi < comparison_pairs().size(); ++pi) {
                SummaryRow row;
                row.studies = S;
                row.sigma = sigma;
                row.space = comparison_pairs()[pi].first;
                row.method = comparison_pairs()[pi].second;
                std::vector<double> fdr, fnr, auc, dec;
                for (const auto& r : reps) {
                    if (!r.ok || r.studies != S || r.sigma != sigma) continue;
                    const auto& e = r.evals[pi].report;
                    fdr.push_back(e.fdr);
                    fnr.push_back(e.fnr);
                    auc.push_back(e.auc);
                    dec.push_back(static_cast<double>(e.n_declared));
                }
                row.n_ok = fdr.size();
                std::tie(row.fdr_mean, row.fdr_sd) = mean_sd(fdr);
                std::tie(row.fnr_mean, row.fnr_sd) = mean_sd(fnr);
                std::tie(row.auc_mean, row.auc_sd) = mean_sd(auc);
                row.declared_mean = mean_sd(dec).first;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

/// Runs every (S, sigma, seed) replicate on a pool of `threads` workers.
/// Results are placed by job index, so the output does not depend on
/// scheduling. A failing replicate is logged and excluded from the summary.
inline BenchResult run_bench(const BenchSpec& spec, std::ostream* log = &std::cerr) {
    struct Job {
        std::size_t studies;
        double sigma;
        std::size_t index;
    };
    std::vector<Job> jobs;
    for (std::size_t S : spec.studies)
        for (double sigma : spec.sigmas)
            for (std::size_t i = 0; i < spec.seeds; ++i) jobs.push_back({S, sigma, i});

    BenchResult result;
    result.replicates.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t j = next++;
            if (j >= jobs.size()) return;
            const Job& job = jobs[j];
            auto sim_cfg = spec.base;
            sim_cfg.studies = job.studies;
            sim_cfg.sigma = job.sigma;
            sim_cfg = sim::SimConfig::for_scenario(sim_cfg.scenario, sim_cfg);
            sim_cfg.seed = replicate_seed(spec.seed, job.studies, job.sigma, job.index);
            auto mcmc = spec.mcmc;
            mcmc.seed = splitmix64(sim_cfg.seed);
            mcmc.threads = 1;
            ReplicateResult& r = result.replicates[j];
            try {
                r = run_replicate(sim_cfg, mcmc, spec.fdr);
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
                r.studies = sim_cfg.studies;
                r.sigma = job.sigma;
                r.seed = sim_cfg.seed;
            }
            r.index = job.index;
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(spec.threads, jobs.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& r : result.replicates) {
        if (!r.ok) {
            result.all_ok = false;
            if (log) *log << "bench: replicate S=" << r.studies << " sigma=" << r.sigma << " #" << r.index
                          << " failed: " << r.error << '\n';
        }
    }
    result.summary = summarize(spec, result.replicates);
    return result;
}

inline nlohmann::json replicate_json(const ReplicateResult& r, const Provenance& prov) {
    nlohmann::json j;
    j["meta"] = {{"tool", "metapat"}, {"version", kVersion}, {"seed", prov.seed}, {"config", prov.config_hash}};
    j["studies"] = r.studies;
    j["sigma"] = r.sigma;
    j["replicate"] = r.index;
    j["replicate_seed"] = r.seed;
    j["ok"] = r.ok;
    if (!r.ok) j["error"] = r.error;
    j["gamma_acceptance"] = r.gamma_acceptance;
    j["results"] = nlohmann::json::array();
    for (const auto& e : r.evals) {
        j["results"].push_back({{"space", e.space},
                                {"method", e.method},
                                {"fdr", e.report.fdr},
                                {"fnr", e.report.fnr},
                                {"auc", e.report.auc},
                                {"n_declared", e.report.n_declared},
                                {"n_true_alt", e.report.n_true_alt}});
    }
    return j;
}

inline std::string summary_tsv(const BenchResult& res, const Provenance& prov) {
    std::ostringstream os;
    os << prov.header_line() << '\n';
    os << "S\tsigma\tspace\tmethod\tn_ok\tfdr_mean\tfdr_sd\tfnr_mean\tfnr_sd\tauc_mean\tauc_sd\tdeclared_mean\n";
    for (const auto& r : res.summary) {
        os << r.studies << '\t' << tsv::fmt(r.sigma) << '\t' << r.space << '\t' << r.method << '\t' << r.n_ok << '\t'
           << tsv::fmt(r.fdr_mean) << '\t' << tsv::fmt(r.fdr_sd) << '\t' << tsv::fmt(r.fnr_mean) << '\t'
           << tsv::fmt(r.fnr_sd) << '\t' << tsv::fmt(r.auc_mean) << '\t' << tsv::fmt(r.auc_sd) << '\t'
           << tsv::fmt(r.declared_mean) << '\n';
    }
    return os.str();
}

/// Writes summary.tsv and one JSON per replicate under replicates/.
inline void write_bench(const std::string& dir, const BenchResult& res, const Provenance& prov) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "replicates");
    {
        std::ofstream out(fs::path(dir) / "summary.tsv", std::ios::binary);
        out << summary_tsv(res, prov);
        if (!out) throw FormatError("cannot write " + (fs::path(dir) / "summary.tsv").string());
    }
    for (const auto& r : res.replicates) {
        const std::string name = "S" + std::to_string(r.studies) + "_sigma" + tsv::fmt(r.sigma) + "_rep" +
                                 std::to_string(r.index) + ".json";
        std::ofstream out(fs::path(dir) / "replicates" / name, std::ios::binary);
        out << replicate_json(r, prov).dump(2) << '\n';
    }
}

} // namespace metapat
