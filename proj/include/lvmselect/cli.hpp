#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lvmselect/checks.hpp"
#include "lvmselect/harness.hpp"
#include "lvmselect/io.hpp"

namespace lvmselect::cli {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Kind { integer, real, text, integer_list, text_list };

struct FlagSpec {
    std::string name;  // without leading dashes
    Kind kind;
    std::string help;
};

/// Flag values merged from a JSON config file and the command line; the command line wins.
class Settings {
public:
    void set(const std::string& key, nlohmann::json v) { values_[key] = std::move(v); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    long long integer(const std::string& key, long long fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v.is_array()) {
            if (v.size() != 1) throw UsageError("--" + key + " takes a single value");
            return as_integer(key, v[0]);
        }
        return as_integer(key, v);
    }
    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) return parse_real(key, v.get<std::string>());
        throw UsageError("--" + key + " expects a number");
    }
    std::string text(const std::string& key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (!v.is_string()) throw UsageError("--" + key + " expects a string");
        return v.get<std::string>();
    }
    std::vector<long long> integers(const std::string& key, std::vector<long long> fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        std::vector<long long> out;
        if (v.is_array())
            for (const auto& e : v) out.push_back(as_integer(key, e));
        else
            out.push_back(as_integer(key, v));
        return out;
    }
    std::vector<std::string> texts(const std::string& key, std::vector<std::string> fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        std::vector<std::string> out;
        if (v.is_array())
            for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
        else
            out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        return out;
    }

private:
    static double parse_real(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw UsageError("--" + key + " expects a number, got '" + s + "'");
    }
    static long long as_integer(const std::string& key, const nlohmann::json& v) {
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) return static_cast<long long>(v.get<double>());
        if (v.is_string()) {
            try {
                std::size_t used = 0;
                const long long out = std::stoll(v.get<std::string>(), &used);
                if (used == v.get<std::string>().size()) return out;
            } catch (const std::exception&) {
            }
        }
        throw UsageError("--" + key + " expects an integer, got " + v.dump());
    }
    std::map<std::string, nlohmann::json> values_;
};

struct Command {
    std::string name;
    std::string description;
    std::vector<FlagSpec> flags;
};

inline std::vector<Command> commands() {
    const FlagSpec config{"config", Kind::text, "JSON file of flag values (keys use underscores)"};
    const FlagSpec seed{"seed", Kind::integer, "run seed (falls back to LVMSELECT_SEED, then 0)"};
    const FlagSpec out{"out", Kind::text, "output path (stdout when omitted)"};
    return {
        {"gen",
         "Generate synthetic PCA data X = Z W^T + E as CSV",
         {{"n", Kind::integer, "number of observations"},
          {"d", Kind::integer, "data dimension"},
          {"k-true", Kind::integer, "true latent dimension"},
          {"sigma", Kind::real, "noise standard deviation"},
          seed, out, config}},
        {"fit",
         "Fit one model to a data CSV and write a JSON report",
         {{"method", Kind::text, "gfab | em | bicem | vb1 | vb2 (bpca); fab | em (gmm)"},
          {"model", Kind::text, "bpca | gmm"},
          {"k", Kind::integer, "latent dimension or number of components (initial K for gfab/fab)"},
          {"data", Kind::text, "input data CSV with header x1,...,xD"},
          {"tol", Kind::real, "relative objective tolerance"},
          {"max-iter", Kind::integer, "iteration cap"},
          {"delta", Kind::real, "pruning threshold (Fisher eigenvalue for bpca, tau for gmm)"},
          {"warmup", Kind::integer, "penalty-free EM iterations before gfab"},
          {"sigma", Kind::real, "component standard deviation for gmm"},
          seed, out, config}},
        {"sweep",
         "Run the model-selection benchmark and write a CSV of per-run records",
         {{"n", Kind::integer_list, "sample sizes (one CSV per size when several are given)"},
          {"d", Kind::integer, "data dimension"},
          {"k-true", Kind::integer, "true latent dimension"},
          {"k-max", Kind::integer, "largest K swept; initial K for gfab/fabgmm"},
          {"sigma", Kind::real, "noise standard deviation"},
          {"seed", Kind::integer_list, "run seeds (default 0..9; LVMSELECT_SEED gives a single seed)"},
          {"method", Kind::text_list, "methods among gfab em bicem vb1 vb2 fabgmm (default all)"},
          {"tol", Kind::real, "relative objective tolerance"},
          {"max-iter", Kind::integer, "iteration cap"},
          {"delta", Kind::real, "pruning threshold"},
          {"warmup", Kind::integer, "penalty-free EM iterations before gfab"},
          {"jobs", Kind::integer, "concurrent runs"},
          out, config}},
        {"demo-skew",
         "Tabulate the binomial, FIC-penalty and skewed posteriors of a two-component mixture",
         {{"n", Kind::integer, "number of observations N"},
          {"mu1", Kind::real, "estimated mean of component 1"},
          {"mu2", Kind::real, "estimated mean of component 2"},
          {"pi", Kind::real, "true weight of the N(0,1) component"},
          out, config}},
        {"check",
         "Run the Hessian and Laplace self-checks and print pass/fail per property",
         {{"k", Kind::integer, "random instances per Hessian check"}, config}},
    };
}

inline std::string underscore(std::string s) {
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

inline void load_config(const std::string& path, const Command& cmd, Settings& settings) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config " + path + ": top level must be an object");
    std::map<std::string, std::string> allowed;
    for (const auto& f : cmd.flags)
        if (f.name != "config") allowed[underscore(f.name)] = f.name;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto found = allowed.find(it.key());
        if (found == allowed.end()) throw UsageError("config " + path + ": unknown key '" + it.key() + "' for " + cmd.name);
        settings.set(found->second, it.value());
    }
}

inline std::uint64_t env_seed() {
    if (const char* s = std::getenv("LVMSELECT_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw UsageError(std::string("LVMSELECT_SEED is not an integer: ") + s);
        }
    }
    return 0;
}

inline std::uint64_t seed_of(const Settings& s) {
    if (s.has("seed")) {
        const long long v = s.integer("seed", 0);
        if (v < 0) throw UsageError("--seed must be non-negative");
        return static_cast<std::uint64_t>(v);
    }
    return env_seed();
}

inline std::size_t positive(const Settings& s, const std::string& key, long long fallback) {
    const long long v = s.integer(key, fallback);
    if (v <= 0) throw UsageError("--" + key + " must be positive");
    return static_cast<std::size_t>(v);
}

inline void emit(const Settings& s, const std::string& content, std::ostream& out) {
    if (s.has("out")) write_atomically(s.text("out", ""), content);
    else out << content;
}

inline int run_gen(const Settings& s, std::ostream& out) {
    ExperimentConfig c;
    c.d = positive(s, "d", 30);
    c.k_true = positive(s, "k-true", 10);
    c.sigma_noise = s.real("sigma", 1.0);
    if (c.k_true > c.d) throw UsageError("--k-true must not exceed --d");
    if (c.sigma_noise < 0.0) throw UsageError("--sigma must be non-negative");
    const Matrix x = generate_synthetic(c, positive(s, "n", 100), seed_of(s));
    emit(s, data_csv(x), out);
    return 0;
}

inline int run_fit(const Settings& s, std::ostream& out) {
    if (!s.has("data")) throw UsageError("fit requires --data");
    std::string model = s.text("model", "bpca");
    std::string method = s.text("method", model == "gmm" ? "fab" : "gfab");
    std::transform(method.begin(), method.end(), method.begin(), ::tolower);
    FitConfig fc;
    fc.tol = s.real("tol", 1e-5);
    fc.max_iter = positive(s, "max-iter", 10000);
    fc.warmup = static_cast<std::size_t>(std::max(0LL, s.integer("warmup", 100)));
    fc.seed = seed_of(s);
    if (fc.tol <= 0.0) throw UsageError("--tol must be positive");
    const Matrix raw = read_data_csv(s.text("data", ""));

    FitReport rep;
    if (model == "bpca") {
        fc.delta = s.real("delta", 1e-4);
        if (fc.delta <= 0.0) throw UsageError("--delta must be positive");
        const DataMatrix x = make_data(raw, true);
        const std::size_t k = positive(s, "k", static_cast<long long>(std::min(x.n(), x.d())));
        if (k > std::min(x.n(), x.d())) throw UsageError("--k must not exceed min(N, D)");
        if (method == "gfab") rep = fit_gfab_bpca(x, k, fc);
        else if (method == "em") rep = fit_em_bpca(x, k, fc, EmMode::EM);
        else if (method == "bicem") rep = fit_em_bpca(x, k, fc, EmMode::BICEM);
        else if (method == "vb1") rep = fit_vb(x, k, fc, VbMode::VB1);
        else if (method == "vb2") rep = fit_vb(x, k, fc, VbMode::VB2);
        else throw UsageError("unknown bpca method '" + method + "'");
    } else if (model == "gmm") {
        const DataMatrix x = make_data(raw, false);
        const std::size_t k = positive(s, "k", 5);
        if (k > x.n()) throw UsageError("--k must not exceed N");
        fc.gmm_delta = s.real("delta", 1e-2 / static_cast<double>(k));
        if (fc.gmm_delta <= 0.0 || fc.gmm_delta >= 1.0) throw UsageError("--delta must lie in (0, 1) for gmm");
        const double sigma = s.real("sigma", 1.0);
        if (sigma <= 0.0) throw UsageError("--sigma must be positive");
        fc.sigma2 = sigma * sigma;
        if (method == "fab" || method == "fabgmm") rep = fit_fab_gmm(x, k, fc, true);
        else if (method == "em") rep = fit_fab_gmm(x, k, fc, false);
        else throw UsageError("unknown gmm method '" + method + "'");
    } else {
        throw UsageError("unknown model '" + model + "'");
    }
    emit(s, to_json(rep).dump(2) + "\n", out);
    return 0;
}

inline std::filesystem::path per_n_path(const std::filesystem::path& base, std::size_t n) {
    std::filesystem::path p = base;
    p.replace_filename(base.stem().string() + "_n" + std::to_string(n) + base.extension().string());
    return p;
}

inline int run_sweep_cmd(const Settings& s, std::ostream& out) {
    ExperimentConfig c;
    c.n_list.clear();
    for (long long n : s.integers("n", {100, 500, 1000, 2000})) {
        if (n <= 0) throw UsageError("--n values must be positive");
        c.n_list.push_back(static_cast<std::size_t>(n));
    }
    c.d = positive(s, "d", 30);
    c.k_true = positive(s, "k-true", 10);
    c.k_max = positive(s, "k-max", static_cast<long long>(c.d));
    c.sigma_noise = s.real("sigma", 1.0);
    c.seeds.clear();
    if (s.has("seed")) {
        for (long long v : s.integers("seed", {})) {
            if (v < 0) throw UsageError("--seed values must be non-negative");
            c.seeds.push_back(static_cast<std::uint64_t>(v));
        }
    } else if (std::getenv("LVMSELECT_SEED")) {
        c.seeds.push_back(env_seed());
    } else {
        for (std::uint64_t v = 0; v < 10; ++v) c.seeds.push_back(v);
    }
    if (s.has("method")) {
        c.methods.clear();
        for (const auto& m : s.texts("method", {})) {
            try {
                c.methods.push_back(parse_method(m));
            } catch (const ContractViolation& e) {
                throw UsageError(e.what());
            }
        }
    }
    c.tol = s.real("tol", 1e-5);
    c.max_iter = positive(s, "max-iter", 10000);
    c.delta = s.real("delta", 1e-4);
    c.warmup = static_cast<std::size_t>(std::max(0LL, s.integer("warmup", 100)));
    try {
        c.validate();
    } catch (const ContractViolation& e) {
        throw UsageError(e.what());
    }
    if (c.n_list.size() > 1 && !s.has("out"))
        throw UsageError("several --n values need --out; one CSV is written per sample size");
    const std::size_t jobs = positive(s, "jobs", 1);

    const auto records = run_sweep(c, jobs);
    if (c.n_list.size() == 1) {
        emit(s, sweep_csv(records), out);
        return 0;
    }
    for (std::size_t n : c.n_list) {
        std::vector<SweepRecord> part;
        for (const auto& r : records)
            if (r.n == n) part.push_back(r);
        write_reports(part, per_n_path(s.text("out", ""), n));
    }
    return 0;
}

inline int run_demo_skew(const Settings& s, std::ostream& out) {
    const double pi = s.real("pi", 0.5);
    if (!(pi > 0.0 && pi < 1.0)) throw UsageError("--pi must lie in (0, 1)");
    const auto table = demo_skew_gmm(positive(s, "n", 15), s.real("mu1", 0.0), s.real("mu2", 1.0), pi);
    emit(s, skew_csv(table), out);
    return 0;
}

inline int run_check(const Settings& s, std::ostream& out) {
    bool ok = true;
    for (const auto& r : run_checks(positive(s, "k", 20))) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " value=" << format_number(r.value)
            << " bound=" << format_number(r.bound) << "\n";
        ok = ok && r.passed;
    }
    return ok ? 0 : 2;
}

/// Parses argv-style arguments (without the program name) and runs a subcommand.
/// Returns 0 on success, 1 on usage errors and 2 on runtime failures.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Model selection for latent variable models (gFAB, EM, BICEM, VB)", "lvmselect"};
    app.require_subcommand(1);
    const auto cmds = commands();
    std::map<std::string, std::map<std::string, std::vector<std::string>>> raw;
    std::map<std::string, CLI::App*> subs;
    for (const auto& cmd : cmds) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
        subs[cmd.name] = sub;
        for (const auto& f : cmd.flags) {
            auto* opt = sub->add_option("--" + f.name, raw[cmd.name][f.name], f.help);
            if (f.kind == Kind::integer_list || f.kind == Kind::text_list) opt->expected(1, 1 << 20);
            else opt->expected(1);
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) {
                out << sub->help();
                return 0;
            }
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    for (const auto& cmd : cmds) {
        CLI::App* sub = subs[cmd.name];
        if (!sub->parsed()) continue;
        try {
            Settings settings;
            const auto& given = raw[cmd.name];
            if (sub->count("--config")) load_config(given.at("config").front(), cmd, settings);
            for (const auto& f : cmd.flags) {
                if (f.name == "config" || sub->count("--" + f.name) == 0) continue;
                const auto& vals = given.at(f.name);
                if (f.kind == Kind::integer_list || f.kind == Kind::text_list) settings.set(f.name, vals);
                else settings.set(f.name, vals.back());
            }
            if (cmd.name == "gen") return run_gen(settings, out);
            if (cmd.name == "fit") return run_fit(settings, out);
            if (cmd.name == "sweep") return run_sweep_cmd(settings, out);
            if (cmd.name == "demo-skew") return run_demo_skew(settings, out);
            return run_check(settings, out);
        } catch (const UsageError& e) {
            err << "usage error: " << e.what() << "\n" << sub->help();
            return 1;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return 2;
        }
    }
    return 1;
}

}  // namespace lvmselect::cli
