#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "metapat/pipeline.hpp"

namespace fs = std::filesystem;
using namespace metapat;

namespace {

BenchSpec smoke_spec(std::size_t threads = 1) {
    BenchSpec spec;
    spec.base.genes = 300;
    spec.studies = {2, 3};
    spec.sigmas = {1.0};
    spec.seeds = 3;
    spec.seed = 11;
    spec.mcmc.n_iter = 300;
    spec.mcmc.burn_in = 100;
    spec.threads = threads;
    return spec;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

class TempDir {
public:
    TempDir() {
        static int n = 0;
        path_ = fs::temp_directory_path() / ("metapat_pipe_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& s) const { return path_ / s; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// Runs the CLI and returns its exit status; stderr goes to `err`.
int cli(const std::string& args, const fs::path& err, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(METAPAT_CLI) + " " + args + " 2> " + err.string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Bench, SummaryHasOneRowPerPairAndCell) {
    const auto res = run_bench(smoke_spec(), nullptr);
    ASSERT_TRUE(res.all_ok);
    EXPECT_EQ(res.replicates.size(), 6u);
    EXPECT_EQ(res.summary.size(), 2 * comparison_pairs().size());
    for (const auto& r : res.summary) EXPECT_EQ(r.n_ok, 3u);
}

TEST(Bench, SummaryMeansMatchReplicates) {
    const auto res = run_bench(smoke_spec(), nullptr);
    for (const auto& row : res.summary) {
        std::size_t pi = 0;
        while (comparison_pairs()[pi] != std::pair{row.space, row.method}) ++pi;
        double fdr = 0.0, auc = 0.0;
        int n = 0;
        for (const auto& r : res.replicates) {
            if (r.studies != row.studies) continue;
            fdr += r.evals[pi].report.fdr;
            auc += r.evals[pi].report.auc;
            ++n;
        }
        EXPECT_NEAR(row.fdr_mean, fdr / n, 1e-12);
        EXPECT_NEAR(row.auc_mean, auc / n, 1e-12);
        for (const auto& r : res.replicates) EXPECT_EQ(r.evals[pi].space, row.space);
    }
}

TEST(Bench, ByteIdenticalAcrossRunsAndThreadCounts) {
    const Provenance prov{11, "0123456789abcdef"};
    const auto a = summary_tsv(run_bench(smoke_spec(1), nullptr), prov);
    const auto b = summary_tsv(run_bench(smoke_spec(1), nullptr), prov);
    const auto c = summary_tsv(run_bench(smoke_spec(3), nullptr), prov);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    EXPECT_EQ(a.substr(0, a.find('\n')), prov.header_line());
}

TEST(Bench, ReplicateSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::size_t S : {2, 3})
        for (double sigma : {1.0, 2.0})
            for (std::size_t i = 0; i < 5; ++i) seen.insert(replicate_seed(7, S, sigma, i));
    EXPECT_EQ(seen.size(), 20u);
}

TEST(Bench, WritesSummaryAndReplicateJson) {
    TempDir dir;
    const auto res = run_bench(smoke_spec(), nullptr);
    write_bench(dir.path().string(), res, Provenance{11, "0123456789abcdef"});
    EXPECT_TRUE(fs::exists(dir / "summary.tsv"));
    const auto j = nlohmann::json::parse(slurp(dir / "replicates/S3_sigma1_rep2.json"));
    EXPECT_EQ(j["meta"]["seed"], 11);
    EXPECT_EQ(j["studies"], 3);
    EXPECT_EQ(j["results"].size(), comparison_pairs().size());
}

TEST(Cli, SimulateFitInferEvaluateClusterBaselines) {
    TempDir dir;
    const auto err = dir / "stderr.txt";
    const std::string d = dir.path().string();
    ASSERT_EQ(cli("simulate --G 400 --S 3 --seed 7 --out " + d + "/sim", err), 0) << slurp(err);
    for (const char* f : {"expression_study1.tsv", "expression_study3.tsv", "truth.tsv", "p2.tsv", "sign.tsv"})
        EXPECT_TRUE(fs::exists(dir / ("sim/" + std::string(f)))) << f;
    EXPECT_EQ(slurp(dir / "sim/p2.tsv").rfind("# metapat ", 0), 0u);

    ASSERT_EQ(cli("fit --input " + d + "/sim/p2.tsv --kind p2 --sign " + d + "/sim/sign.tsv --iters 400 --burnin 100 "
                  "--seed 7 --out " + d + "/post",
                  err),
              0)
        << slurp(err);
    EXPECT_TRUE(fs::exists(dir / "post/posterior_prob_pos.tsv"));
    EXPECT_TRUE(fs::exists(dir / "post/trace_gamma.tsv"));

    ASSERT_EQ(cli("infer --posterior " + d + "/post --space B --out " + d + "/dec.tsv", err), 0) << slurp(err);
    const auto dec = slurp(dir / "dec.tsv");
    EXPECT_NE(dec.find("gene_id\txi\tdeclared\tV_study1"), std::string::npos);

    ASSERT_EQ(cli("evaluate --decisions " + d + "/dec.tsv --truth " + d + "/sim/truth.tsv --out " + d + "/eval.json",
                  err),
              0)
        << slurp(err);
    const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
    EXPECT_GT(j["auc"].get<double>(), 0.8);
    EXPECT_LE(j["fdr"].get<double>(), 1.0);

    ASSERT_EQ(cli("cluster --posterior " + d + "/post --genes " + d + "/dec.tsv --k 3 --resamples 10 --out " + d +
                      "/mod.tsv",
                  err),
              0)
        << slurp(err);
    EXPECT_NE(slurp(dir / "mod.tsv").find("gene_id\tmodule_label\tV_study1"), std::string::npos);

    for (const char* m : {"fisher", "stouffer", "maxp", "rop", "aw"}) {
        ASSERT_EQ(cli("baselines --input " + d + "/sim/p2.tsv --method " + std::string(m) + " --out " + d + "/b.tsv",
                      err),
                  0)
            << m << ": " << slurp(err);
        ASSERT_EQ(cli("evaluate --decisions " + d + "/b.tsv --truth " + d + "/sim/truth.tsv --out " + d + "/be.json",
                      err),
                  0)
            << slurp(err);
    }
}

TEST(Cli, SeedPrecedenceShowsInHeader) {
    TempDir dir;
    const auto err = dir / "stderr.txt";
    const std::string d = dir.path().string();
    std::ofstream(dir / "cfg.toml") << "seed = 22\n";
    ASSERT_EQ(cli("simulate --G 100 --S 2 --out " + d + "/a", err, "METAPAT_SEED=11"), 0) << slurp(err);
    EXPECT_NE(slurp(dir / "a/truth.tsv").find("seed=11 "), std::string::npos);
    ASSERT_EQ(cli("--config " + d + "/cfg.toml simulate --G 100 --S 2 --out " + d + "/b", err, "METAPAT_SEED=11"), 0);
    EXPECT_NE(slurp(dir / "b/truth.tsv").find("seed=22 "), std::string::npos);
    ASSERT_EQ(cli("--config " + d + "/cfg.toml simulate --G 100 --S 2 --seed 33 --out " + d + "/c", err,
                  "METAPAT_SEED=11"),
              0);
    EXPECT_NE(slurp(dir / "c/truth.tsv").find("seed=33 "), std::string::npos);
}

TEST(Cli, ErrorsExitNonZero) {
    TempDir dir;
    const auto err = dir / "stderr.txt";
    const std::string d = dir.path().string();
    std::ofstream(dir / "bad.tsv") << "gene_id\tstudy1\ng1\tnotanumber\n";
    EXPECT_EQ(cli("baselines --input " + d + "/bad.tsv --out " + d + "/o.tsv", err), 2);
    EXPECT_NE(slurp(err).find("error"), std::string::npos);
    std::ofstream(dir / "cfg.toml") << "unknown_key = 1\n";
    EXPECT_EQ(cli("--config " + d + "/cfg.toml simulate --out " + d + "/x", err), 2);
    EXPECT_EQ(cli("infer --fdr 2 --posterior " + d + " --out " + d + "/o.tsv", err), 2);
    EXPECT_NE(cli("nosuchcommand", err), 0);
}

TEST(Cli, BenchIsRepeatable) {
    TempDir dir;
    const auto err = dir / "stderr.txt";
    const std::string d = dir.path().string();
    const std::string args = "bench --G 300 --studies 2 --sigmas 1 --seeds 2 --iters 300 --burnin 100 --seed 5 --out ";
    ASSERT_EQ(cli(args + d + "/r1", err), 0) << slurp(err);
    ASSERT_EQ(cli(args + d + "/r2", err), 0) << slurp(err);
    EXPECT_EQ(slurp(dir / "r1/summary.tsv"), slurp(dir / "r2/summary.tsv"));
    EXPECT_EQ(slurp(dir / "r1/replicates/S2_sigma1_rep1.json"), slurp(dir / "r2/replicates/S2_sigma1_rep1.json"));
    std::istringstream lines(slurp(dir / "r1/summary.tsv"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    EXPECT_EQ(n, 2 + static_cast<int>(comparison_pairs().size()));
}
