#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "metapat/baselines.hpp"
#include "metapat/error.hpp"
#include "metapat/inference.hpp"
#include "metapat/mcmc.hpp"
#include "metapat/metapattern.hpp"
#include "metapat/rng.hpp"
#include "metapat/simgen.hpp"
#include "metapat/tsv.hpp"

namespace metapat {

/// Every tunable of every subcommand. Loaded from a `key = value` file (with
/// `#` comments and optional quotes), then overridden by command-line flags.
struct RunConfig {
    McmcConfig mcmc;
    std::size_t checkpoint_every = 1000;

    double fdr = 0.05;
    std::string space = "B";
    std::size_t r = 0;  // 0 selects floor(S/2) + 1

    TightClustConfig tight;

    std::string method = "fisher";

    sim::SimConfig sim;
    std::string scenario = "general";
    std::size_t cases = 20;
    std::size_t controls = 20;

    std::size_t threads = 1;
    std::size_t seeds = 2;
    std::string studies_grid = "3";
    std::string sigma_grid = "1";

    using Setter = std::function<void(RunConfig&, const std::string&)>;

    static const std::map<std::string, Setter>& setters() {
        static const std::map<std::string, Setter> table = [] {
            std::map<std::string, Setter> t;
            auto uns = [](auto member) {
                return Setter([member](RunConfig& c, const std::string& v) { c.*member = parse_size(v); });
            };
            auto real = [](auto member) {
                return Setter([member](RunConfig& c, const std::string& v) { c.*member = parse_real(v); });
            };
            auto str = [](auto member) {
                return Setter([member](RunConfig& c, const std::string& v) { c.*member = v; });
            };
            t["iters"] = [](RunConfig& c, const std::string& v) { c.mcmc.n_iter = parse_size(v); };
            t["burnin"] = [](RunConfig& c, const std::string& v) { c.mcmc.burn_in = parse_size(v); };
            t["thin"] = [](RunConfig& c, const std::string& v) { c.mcmc.thin = parse_size(v); };
            t["seed"] = [](RunConfig& c, const std::string& v) {
                c.mcmc.seed = parse_u64(v);
                c.sim.seed = c.mcmc.seed;
                c.tight.seed = c.mcmc.seed;
            };
            t["beta"] = [](RunConfig& c, const std::string& v) { c.mcmc.beta = parse_real(v); };
            t["sigma0_sq"] = [](RunConfig& c, const std::string& v) { c.mcmc.sigma0_sq = parse_real(v); };
            t["alpha_pos"] = [](RunConfig& c, const std::string& v) { c.mcmc.alpha_pos = parse_real(v); };
            t["alpha_neg"] = [](RunConfig& c, const std::string& v) { c.mcmc.alpha_neg = parse_real(v); };
            t["gamma_sd"] = [](RunConfig& c, const std::string& v) { c.mcmc.gamma_proposal_sd = parse_real(v); };
            t["init"] = [](RunConfig& c, const std::string& v) {
                if (v == "threshold") c.mcmc.init = InitMode::threshold;
                else if (v == "null") c.mcmc.init = InitMode::null;
                else throw DomainError("init must be 'threshold' or 'null'");
            };
            t["checkpoint_every"] = uns(&RunConfig::checkpoint_every);
            t["fdr"] = real(&RunConfig::fdr);
            t["space"] = str(&RunConfig::space);
            t["r"] = uns(&RunConfig::r);
            t["k"] = [](RunConfig& c, const std::string& v) { c.tight.k_target = parse_size(v); };
            t["k_start"] = [](RunConfig& c, const std::string& v) { c.tight.k_start = parse_size(v); };
            t["resamples"] = [](RunConfig& c, const std::string& v) { c.tight.n_resample = parse_size(v); };
            t["subsample_frac"] = [](RunConfig& c, const std::string& v) { c.tight.subsample_frac = parse_real(v); };
            t["tightness"] = [](RunConfig& c, const std::string& v) { c.tight.tightness_alpha = parse_real(v); };
            t["stability_top"] = [](RunConfig& c, const std::string& v) { c.tight.stability_top = parse_size(v); };
            t["min_module_size"] = [](RunConfig& c, const std::string& v) { c.tight.min_size = parse_size(v); };
            t["max_spread_ratio"] = [](RunConfig& c, const std::string& v) { c.tight.max_spread_ratio = parse_real(v); };
            t["method"] = str(&RunConfig::method);
            t["scenario"] = str(&RunConfig::scenario);
            t["genes"] = [](RunConfig& c, const std::string& v) { c.sim.genes = parse_size(v); };
            t["studies"] = [](RunConfig& c, const std::string& v) { c.sim.studies = parse_size(v); };
            t["sigma"] = [](RunConfig& c, const std::string& v) { c.sim.sigma = parse_real(v); };
            t["clusters"] = [](RunConfig& c, const std::string& v) { c.sim.n_clusters = parse_size(v); };
            t["cluster_size"] = [](RunConfig& c, const std::string& v) { c.sim.cluster_size = parse_size(v); };
            t["wishart_df"] = [](RunConfig& c, const std::string& v) { c.sim.wishart_df = parse_real(v); };
            t["de_fraction"] = [](RunConfig& c, const std::string& v) { c.sim.de_fraction = parse_real(v); };
            t["cases"] = uns(&RunConfig::cases);
            t["controls"] = uns(&RunConfig::controls);
            t["threads"] = [](RunConfig& c, const std::string& v) {
                c.threads = parse_size(v);
                c.mcmc.threads = c.threads;
            };
            t["seeds"] = uns(&RunConfig::seeds);
            t["studies_grid"] = str(&RunConfig::studies_grid);
            t["sigma_grid"] = str(&RunConfig::sigma_grid);
            return t;
        }();
        return table;
    }

    /// Applies one setting; records it for the canonical form.
    void set(const std::string& key, const std::string& value) {
        const auto& t = setters();
        auto it = t.find(key);
        if (it == t.end()) throw DomainError("unknown configuration key '" + key + "'");
        try {
            it->second(*this, value);
        } catch (const DomainError& e) {
            throw DomainError("configuration key '" + key + "': " + e.what());
        }
        applied_[key] = value;
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open config '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty() || trimmed.front() == '[') continue;  // TOML table headers are ignored
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw FormatError(path + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
            set(key, value);
        }
    }

    /// Lowest-precedence seed source.
    void apply_env_seed() {
        if (const char* env = std::getenv("METAPAT_SEED"); env && *env) set("seed", env);
    }

    std::uint64_t seed() const { return mcmc.seed; }

    /// Parses a comma-separated list of sizes such as "3,5,10".
    static std::vector<std::size_t> size_list(const std::string& text) {
        std::vector<std::size_t> out;
        for (const auto& item : tsv::split(text, ',')) out.push_back(parse_size(trim(item)));
        if (out.empty()) throw DomainError("empty list");
        return out;
    }
    static std::vector<double> real_list(const std::string& text) {
        std::vector<double> out;
        for (const auto& item : tsv::split(text, ',')) out.push_back(parse_real(trim(item)));
        if (out.empty()) throw DomainError("empty list");
        return out;
    }

    /// Checks every field. Called once all sources have been applied.
    void validate() const {
        mcmc.validate();
        tight.validate();
        if (!(fdr > 0.0 && fdr < 1.0)) throw DomainError("fdr must lie in (0, 1)");
        DecisionSpace::parse(space, r);
        baselines::parse_method(method);
        if (scenario != "general") sim::parse_scenario(scenario);
        if (cases < 2 || controls < 2) throw DomainError("cases and controls need at least 2 samples");
        if (threads == 0) throw DomainError("threads must be positive");
        if (seeds == 0) throw DomainError("seeds must be positive");
        for (auto S : size_list(studies_grid))
            if (S == 0) throw DomainError("studies_grid entries must be positive");
        for (auto sg : real_list(sigma_grid))
            if (!(sg > 0.0)) throw DomainError("sigma_grid entries must be positive");
        auto s = sim;
        s.n_cases.assign(s.studies, cases);
        s.n_controls.assign(s.studies, controls);
        s.validate();
    }

    /// Stable text of every explicitly applied setting, sorted by key.
    std::string canonical() const {
        std::ostringstream os;
        for (const auto& [k, v] : applied_) os << k << '=' << v << '\n';
        return os.str();
    }

    std::string hash() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
        return buf;
    }

    Provenance provenance() const { return {seed(), hash()}; }

    static std::size_t parse_size(const std::string& v) {
        auto d = tsv::to_double(v);
        if (!d || *d < 0 || *d != static_cast<double>(static_cast<std::uint64_t>(*d)))
            throw DomainError("expected a nonnegative integer, got '" + v + "'");
        return static_cast<std::size_t>(*d);
    }
    static std::uint64_t parse_u64(const std::string& v) {
        try {
            std::size_t used = 0;
            const auto x = std::stoull(v, &used);
            if (used != v.size()) throw DomainError("");
            return x;
        } catch (...) {
            throw DomainError("expected an unsigned integer, got '" + v + "'");
        }
    }
    static double parse_real(const std::string& v) {
        auto d = tsv::to_double(v);
        if (!d || !std::isfinite(*d)) throw DomainError("expected a number, got '" + v + "'");
        return *d;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> applied_;
};

} // namespace metapat
