#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metapat/baselines.hpp"
#include "metapat/config.hpp"
#include "metapat/inference.hpp"
#include "metapat/io.hpp"
#include "metapat/metapattern.hpp"
#include "metapat/metrics.hpp"
#include "metapat/pipeline.hpp"
#include "metapat/posterior_io.hpp"
#include "metapat/sampler.hpp"
#include "metapat/simgen.hpp"
#include "metapat/version.hpp"

namespace fs = std::filesystem;
using namespace metapat;

namespace {

// Flag values are kept as text and routed through RunConfig::set after the
// environment and the config file, so flags win and share one validator.
struct FlagBinder {
    std::vector<std::pair<CLI::Option*, std::string>> bound;
    std::map<std::string, std::string> values;

    void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto* opt = app->add_option(flag, values[key], help);
        bound.emplace_back(opt, key);
    }

    void apply(RunConfig& cfg) const {
        for (const auto& [opt, key] : bound)
            if (opt->count() > 0) cfg.set(key, values.at(key));
    }
};

void log(const std::string& msg) { std::cerr << "metapat: " << msg << '\n'; }

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

ZMatrix load_fit_input(const std::string& input, const std::string& kind, const std::string& sign_path) {
    if (kind == "z") return parse_zstats(input);
    if (kind == "p1") return p_to_z(parse_pvalues(input));
    if (kind == "p2") {
        if (sign_path.empty()) throw DomainError("--kind p2 needs --sign");
        auto p2 = read_matrix<GenericTag>(input);
        const auto sign_m = read_matrix<GenericTag>(sign_path);
        if (sign_m.genes() != p2.genes() || sign_m.studies() != p2.studies())
            throw DomainError("sign matrix shape does not match the p-value matrix");
        Matrix<int> sign(sign_m.genes(), sign_m.studies());
        for (std::size_t i = 0; i < sign.size(); ++i) {
            const double v = sign_m.values.flat()[i];
            sign.flat()[i] = v == 1.0 ? 1 : v == -1.0 ? -1 : 0;
        }
        for (double& v : p2.values.flat()) {
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError(input + ": p-value outside [0, 1]");
            v = std::clamp(v, kPValueClamp, 1.0);
        }
        auto p1 = two_sided_to_one_sided(p2, sign);
        validate_pvalues(p1, input);
        return p_to_z(p1);
    }
    throw DomainError("--kind must be z, p1 or p2");
}

std::size_t resolve_r(const RunConfig& cfg, std::size_t studies) {
    return cfg.r ? cfg.r : DecisionSpace::default_r(studies);
}

// Genes listed in a decisions/genes file. When a `declared` column exists only
// rows with declared = 1 are kept.
std::vector<std::string> read_gene_list(const std::string& path) {
    const auto table = tsv::read_file(path);
    std::vector<std::string> out;
    std::size_t declared_col = table.header.size();
    for (std::size_t c = 0; c < table.header.size(); ++c)
        if (table.header[c] == "declared") declared_col = c;
    for (const auto& row : table.rows) {
        if (row.empty()) continue;
        if (declared_col < table.header.size()) {
            if (row.size() <= declared_col) throw FormatError(path + ": ragged row");
            if (row[declared_col] != "1") continue;
        }
        out.push_back(row[0]);
    }
    return out;
}

int cmd_fit(const RunConfig& cfg, const std::string& input, const std::string& kind, const std::string& sign,
            const std::string& out, const std::string& resume) {
    const auto z = load_fit_input(input, kind, sign);
    log("fit: " + std::to_string(z.genes()) + " genes x " + std::to_string(z.studies()) + " studies, " +
        std::to_string(cfg.mcmc.n_iter) + " iterations");
    fs::create_directories(out);
    RunOptions opts;
    if (cfg.checkpoint_every) {
        opts.checkpoint_path = join(out, "chain.ckpt");
        opts.checkpoint_every = cfg.checkpoint_every;
    }
    if (!resume.empty()) opts.resume_from = resume;
    auto mcmc = cfg.mcmc;
    mcmc.threads = cfg.threads;
    Posterior post{run(z.values, mcmc, opts), z.gene_ids, z.study_ids};
    write_posterior(out, post, cfg.provenance());
    log("fit: gamma acceptance rate " + tsv::fmt(post.acc.gamma_acceptance_rate()));
    return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& posterior, const std::string& out) {
    const auto post = read_posterior(posterior);
    const auto space = DecisionSpace::parse(cfg.space, resolve_r(cfg, post.acc.studies));
    const auto xi = compute_xi(post.acc, space);
    const auto dec = bayes_fdr_declare(xi, cfg.fdr);
    const auto v = confidence_scores(post.acc);
    tsv::Writer w(out, cfg.provenance());
    std::vector<std::string> head{"gene_id", "xi", "declared"};
    for (const auto& s : post.study_ids) head.push_back("V_" + s);
    w.row(head);
    for (std::size_t g = 0; g < xi.size(); ++g) {
        std::vector<std::string> row{post.gene_ids[g], tsv::fmt(xi[g]), dec.declared[g] ? "1" : "0"};
        for (std::size_t s = 0; s < post.acc.studies; ++s) row.push_back(tsv::fmt(v(g, s)));
        w.row(row);
    }
    w.close();
    log("infer: space " + space.name() + ", " + std::to_string(dec.n_declared) + " genes declared, estimated FDR " +
        tsv::fmt(dec.achieved_fdr));
    return 0;
}

int cmd_cluster(const RunConfig& cfg, const std::string& posterior, const std::string& genes_path,
                const std::string& out) {
    const auto post = read_posterior(posterior);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t g = 0; g < post.gene_ids.size(); ++g) index.emplace(post.gene_ids[g], g);
    std::vector<std::size_t> rows;
    for (const auto& id : read_gene_list(genes_path)) {
        auto it = index.find(id);
        if (it == index.end()) throw DomainError("gene '" + id + "' is not in the posterior");
        rows.push_back(it->second);
    }
    if (rows.empty()) throw DomainError("no genes selected for clustering");
    const auto u = posterior_vectors(post.acc, rows);
    const auto d = DissimilarityMatrix::from_posteriors(u);
    std::vector<std::uint64_t> keys;
    for (auto g : rows) keys.push_back(fnv1a(post.gene_ids[g]));
    const auto modules = tight_cluster(d, cfg.tight, keys);
    const auto v = confidence_scores(post.acc);

    tsv::Writer w(out, cfg.provenance());
    std::vector<std::string> head{"gene_id", "module_label"};
    for (const auto& s : post.study_ids) head.push_back("V_" + s);
    w.row(head);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> row{post.gene_ids[rows[i]], std::to_string(modules.labels[i])};
        for (std::size_t s = 0; s < post.acc.studies; ++s) row.push_back(tsv::fmt(v(rows[i], s)));
        w.row(row);
    }
    w.close();
    log("cluster: " + std::to_string(modules.k_found) + " modules from " + std::to_string(rows.size()) + " genes");
    return 0;
}

int cmd_baselines(const RunConfig& cfg, const std::string& input, const std::string& out) {
    const auto p = parse_pvalues(input);
    const auto method = baselines::parse_method(cfg.method);
    const std::size_t r = resolve_r(cfg, p.studies());
    if (method == baselines::Method::rop && r > p.studies()) throw DomainError("--r exceeds the number of studies");
    std::vector<double> combined(p.genes());
    std::vector<std::string> weights;
    for (std::size_t g = 0; g < p.genes(); ++g) {
        if (method == baselines::Method::aw) {
            const auto aw = baselines::aw_fisher(p.values.row(g));
            combined[g] = aw.minp;
            std::string wstr;
            for (auto b : aw.weights) wstr += b ? '1' : '0';
            weights.push_back(wstr);
        } else {
            combined[g] = baselines::combine(method, p.values.row(g), r);
        }
    }
    const auto declared = baselines::bh_fdr(combined, cfg.fdr);
    tsv::Writer w(out, cfg.provenance());
    std::vector<std::string> head{"gene_id", "p", "declared"};
    if (!weights.empty()) head.push_back("weights");
    w.row(head);
    std::size_t n = 0;
    for (std::size_t g = 0; g < p.genes(); ++g) {
        std::vector<std::string> row{p.gene_ids[g], tsv::fmt(combined[g]), declared[g] ? "1" : "0"};
        if (!weights.empty()) row.push_back(weights[g]);
        w.row(row);
        n += declared[g];
    }
    w.close();
    log("baselines: " + baselines::method_name(method) + " declared " + std::to_string(n) + " genes");
    return 0;
}

sim::SimConfig sim_config(const RunConfig& cfg) {
    auto s = cfg.sim;
    s.n_cases.assign(s.studies, cfg.cases);
    s.n_controls.assign(s.studies, cfg.controls);
    return sim::SimConfig::for_scenario(sim::parse_scenario(cfg.scenario), s);
}

int cmd_simulate(const RunConfig& cfg, const std::string& out) {
    const auto sc = sim_config(cfg);
    sc.validate();
    const auto prov = cfg.provenance();
    const auto data = sim::simulate(sc);
    fs::create_directories(out);
    for (std::size_t s = 0; s < sc.studies; ++s)
        sim::write_expression(join(out, "expression_" + sim::study_id(s) + ".tsv"), data.es, s, prov);
    sim::write_truth(join(out, "truth.tsv"), data.truth, prov);
    const auto tt = sim::t_test_pvalues(data.es);
    TableMatrix p2, sign;
    p2.values = tt.p2;
    sign.values = Matrix<double>(tt.sign.rows(), tt.sign.cols());
    for (std::size_t i = 0; i < tt.sign.size(); ++i) sign.values.flat()[i] = tt.sign.flat()[i];
    for (std::size_t g = 0; g < sc.genes; ++g) p2.gene_ids.push_back(sim::gene_id(g));
    for (std::size_t s = 0; s < sc.studies; ++s) p2.study_ids.push_back(sim::study_id(s));
    sign.gene_ids = p2.gene_ids;
    sign.study_ids = p2.study_ids;
    write_matrix(join(out, "p2.tsv"), p2, prov);
    write_matrix(join(out, "sign.tsv"), sign, prov);
    std::size_t n_de = 0;
    for (bool b : data.truth.is_de) n_de += b;
    log("simulate: " + std::to_string(sc.genes) + " genes, " + std::to_string(n_de) + " DE, scenario " +
        sim::scenario_name(sc.scenario));
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& decisions, const std::string& truth_path,
                 const std::string& out) {
    std::vector<std::string> truth_ids;
    const auto truth = sim::read_truth(truth_path, &truth_ids);
    const auto table = tsv::read_file(decisions);
    const auto dcol_opt = table.column("declared");
    if (!dcol_opt) throw FormatError(decisions + ": needs a 'declared' column");
    const std::size_t dcol = *dcol_opt;
    std::size_t score_col = table.header.size();
    bool is_xi = false;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c] == "xi") score_col = c, is_xi = true;
        else if (table.header[c] == "p" && score_col == table.header.size()) score_col = c;
    }
    if (score_col == table.header.size()) throw FormatError(decisions + ": needs an 'xi' or 'p' column");

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < table.rows.size(); ++i) row_of.emplace(table.rows[i].at(0), i);
    const std::size_t G = truth.genes();
    std::vector<bool> declared(G);
    std::vector<double> score(G);
    for (std::size_t g = 0; g < G; ++g) {
        auto it = row_of.find(truth_ids[g]);
        if (it == row_of.end()) throw DomainError("gene '" + truth_ids[g] + "' missing from " + decisions);
        const auto& row = table.rows[it->second];
        if (row.size() != table.header.size()) throw FormatError(decisions + ": ragged row");
        declared[g] = row[dcol] == "1";
        const auto v = tsv::to_double(row[score_col]);
        if (!v) throw ParseError(decisions + ": bad score for gene '" + truth_ids[g] + "'");
        score[g] = is_xi ? 1.0 - *v : baseline_score(*v);
    }
    const auto space = DecisionSpace::parse(cfg.space, resolve_r(cfg, truth.studies()));
    const auto rep = evaluate(declared, score, truth_label(truth, space), space);

    nlohmann::json j;
    j["meta"] = {{"tool", "metapat"}, {"version", kVersion}, {"seed", cfg.seed()}, {"config", cfg.hash()}};
    j["config"] = {{"decisions", decisions}, {"truth", truth_path}, {"space", space.name()}, {"r", space.r}};
    j["space"] = space.name();
    j["fdr"] = rep.fdr;
    j["fnr"] = rep.fnr;
    j["auc"] = rep.auc;
    j["n_declared"] = rep.n_declared;
    j["n_true_alt"] = rep.n_true_alt;
    j["genes"] = rep.genes;
    std::ofstream os(out, std::ios::binary);
    os << j.dump(2) << '\n';
    if (!os) throw FormatError("cannot write '" + out + "'");
    log("evaluate: FDR " + tsv::fmt(rep.fdr) + ", FNR " + tsv::fmt(rep.fnr) + ", AUC " + tsv::fmt(rep.auc));
    return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& out) {
    BenchSpec spec;
    spec.base = cfg.sim;
    spec.base.n_cases.assign(spec.base.studies, cfg.cases);
    spec.base.n_controls.assign(spec.base.studies, cfg.controls);
    spec.base.scenario = sim::parse_scenario(cfg.scenario);
    spec.studies = RunConfig::size_list(cfg.studies_grid);
    spec.sigmas = RunConfig::real_list(cfg.sigma_grid);
    spec.seeds = cfg.seeds;
    spec.seed = cfg.seed();
    spec.mcmc = cfg.mcmc;
    spec.fdr = cfg.fdr;
    spec.threads = cfg.threads;
    log("bench: " + std::to_string(spec.studies.size() * spec.sigmas.size()) + " cells x " +
        std::to_string(spec.seeds) + " seeds");
    const auto res = run_bench(spec);
    write_bench(out, res, cfg.provenance());
    return res.all_ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian hierarchical meta-analysis of differential expression"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    FlagBinder flags;
    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    flags.bind(&app, "--threads", "threads", "worker threads");
    flags.bind(&app, "--seed", "seed", "master seed (METAPAT_SEED is the fallback)");

    auto mcmc_flags = [&](CLI::App* sub) {
        flags.bind(sub, "--iters", "iters", "MCMC iterations");
        flags.bind(sub, "--burnin", "burnin", "burn-in iterations");
        flags.bind(sub, "--thin", "thin", "keep every n-th post-burn-in sample");
        flags.bind(sub, "--beta", "beta", "delta prior shape");
        flags.bind(sub, "--sigma0-sq", "sigma0_sq", "base distribution variance");
        flags.bind(sub, "--alpha-pos", "alpha_pos", "DP concentration, up side");
        flags.bind(sub, "--alpha-neg", "alpha_neg", "DP concentration, down side");
        flags.bind(sub, "--gamma-sd", "gamma_sd", "logit-scale proposal sd for gamma");
        flags.bind(sub, "--init", "init", "threshold or null");
    };

    std::string input, kind = "z", sign, out, resume, posterior, genes, decisions, truth;

    auto* fit = app.add_subcommand("fit", "run the sampler on a Z or p-value matrix");
    fit->add_option("--input", input, "gene x study matrix")->required()->check(CLI::ExistingFile);
    fit->add_option("--kind", kind, "z, p1 (one-sided p) or p2 (two-sided p, needs --sign)");
    fit->add_option("--sign", sign, "effect direction matrix for --kind p2")->check(CLI::ExistingFile);
    fit->add_option("--out", out, "output directory")->required();
    fit->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
    flags.bind(fit, "--checkpoint-every", "checkpoint_every", "snapshot interval in sweeps (0 disables)");
    mcmc_flags(fit);

    auto* infer = app.add_subcommand("infer", "declare genes under a decision space");
    infer->add_option("--posterior", posterior, "directory written by fit")->required()->check(CLI::ExistingDirectory);
    infer->add_option("--out", out, "decisions TSV")->required();
    flags.bind(infer, "--space", "space", "B, Abar or rbar");
    flags.bind(infer, "--r", "r", "minimum DE studies for rbar");
    flags.bind(infer, "--fdr", "fdr", "Bayesian FDR level");

    auto* cluster = app.add_subcommand("cluster", "group declared genes into meta-patterns");
    cluster->add_option("--posterior", posterior, "directory written by fit")->required()->check(CLI::ExistingDirectory);
    cluster->add_option("--genes", genes, "gene list or decisions TSV")->required()->check(CLI::ExistingFile);
    cluster->add_option("--out", out, "modules TSV")->required();
    flags.bind(cluster, "--k", "k", "target number of modules");
    flags.bind(cluster, "--k-start", "k_start", "starting K for the resampling loop");
    flags.bind(cluster, "--resamples", "resamples", "subsamples per round");
    flags.bind(cluster, "--subsample-frac", "subsample_frac", "fraction of genes per subsample");
    flags.bind(cluster, "--tightness", "tightness", "co-membership threshold");
    flags.bind(cluster, "--min-module-size", "min_module_size", "smallest module kept");

    auto* base = app.add_subcommand("baselines", "p-value combination methods with BH control");
    base->add_option("--input", input, "two-sided p-value matrix")->required()->check(CLI::ExistingFile);
    base->add_option("--out", out, "output TSV")->required();
    flags.bind(base, "--method", "method", "fisher, stouffer, maxp, rop or aw");
    flags.bind(base, "--r", "r", "order statistic for rop");
    flags.bind(base, "--fdr", "fdr", "BH level");

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic multi-study data set");
    simulate->add_option("--out", out, "output directory")->required();
    flags.bind(simulate, "--scenario", "scenario", "general, metapattern, unbalanced-a..d");
    flags.bind(simulate, "--S", "studies", "number of studies");
    flags.bind(simulate, "--sigma", "sigma", "noise scale");
    flags.bind(simulate, "--G", "genes", "number of genes");
    flags.bind(simulate, "--cases", "cases", "cases per study");
    flags.bind(simulate, "--controls", "controls", "controls per study");
    flags.bind(simulate, "--clusters", "clusters", "correlated gene clusters");
    flags.bind(simulate, "--de-fraction", "de_fraction", "fraction of DE genes");

    auto* eval = app.add_subcommand("evaluate", "score decisions against simulation truth");
    eval->add_option("--decisions", decisions, "output of infer or baselines")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", truth, "truth.tsv from simulate")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out, "JSON report")->required();
    flags.bind(eval, "--space", "space", "B, Abar or rbar");
    flags.bind(eval, "--r", "r", "minimum DE studies for rbar");

    auto* bench = app.add_subcommand("bench", "end-to-end simulation benchmark grid");
    bench->add_option("--out", out, "report directory")->required();
    flags.bind(bench, "--scenario", "scenario", "simulation scenario");
    flags.bind(bench, "--studies", "studies_grid", "comma-separated study counts");
    flags.bind(bench, "--sigmas", "sigma_grid", "comma-separated noise scales");
    flags.bind(bench, "--G", "genes", "number of genes");
    flags.bind(bench, "--seeds", "seeds", "replicates per cell");
    flags.bind(bench, "--fdr", "fdr", "nominal FDR");
    flags.bind(bench, "--de-fraction", "de_fraction", "fraction of DE genes");
    mcmc_flags(bench);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        cfg.apply_env_seed();
        if (!config_path.empty()) cfg.load_file(config_path);
        flags.apply(cfg);
        cfg.validate();

        if (fit->parsed()) return cmd_fit(cfg, input, kind, sign, out, resume);
        if (infer->parsed()) return cmd_infer(cfg, posterior, out);
        if (cluster->parsed()) return cmd_cluster(cfg, posterior, genes, out);
        if (base->parsed()) return cmd_baselines(cfg, input, out);
        if (simulate->parsed()) return cmd_simulate(cfg, out);
        if (eval->parsed()) return cmd_evaluate(cfg, decisions, truth, out);
        if (bench->parsed()) return cmd_bench(cfg, out);
    } catch (const Error& e) {
        log(std::string("error: ") + e.what());
        return 2;
    } catch (const std::exception& e) {
        log(std::string("unexpected error: ") + e.what());
        return 3;
    }
    return 1;
}
