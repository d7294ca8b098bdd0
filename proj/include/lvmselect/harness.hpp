#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "lvmselect/bpca.hpp"
#include "lvmselect/criteria.hpp"
#include "lvmselect/gmm.hpp"
#include "lvmselect/vb.hpp"

namespace lvmselect {

enum class Method { GFAB, EM, BICEM, VB1, VB2, FABGMM };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::GFAB: return "GFAB";
        case Method::EM: return "EM";
        case Method::BICEM: return "BICEM";
        case Method::VB1: return "VB1";
        case Method::VB2: return "VB2";
        case Method::FABGMM: return "FABGMM";
    }
    return "?";
}

inline Method parse_method(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    if (s == "GFAB") return Method::GFAB;
    if (s == "EM") return Method::EM;
    if (s == "BICEM") return Method::BICEM;
    if (s == "VB1") return Method::VB1;
    if (s == "VB2") return Method::VB2;
    if (s == "FABGMM" || s == "FAB") return Method::FABGMM;
    throw ContractViolation("unknown method '" + s + "'");
}

struct ExperimentConfig {
    std::vector<std::size_t> n_list{100, 500, 1000, 2000};
    std::size_t d = 30;
    std::size_t k_true = 10;
    std::size_t k_max = 30;
    double sigma_noise = 1.0;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<Method> methods{Method::GFAB, Method::EM, Method::BICEM, Method::VB1, Method::VB2, Method::FABGMM};
    double tol = 1e-5;
    std::size_t max_iter = 10000;
    double delta = 1e-4;
    std::size_t warmup = 100;

    void validate() const {
        require(k_true <= k_max && k_max <= d, "ExperimentConfig: need k_true <= k_max <= d");
        require(k_max >= 2, "ExperimentConfig: k_max must be at least 2");
        require(tol > 0.0, "ExperimentConfig: tol must be positive");
        require(sigma_noise >= 0.0, "ExperimentConfig: sigma must be non-negative");
        require(!n_list.empty() && !seeds.empty(), "ExperimentConfig: n_list and seeds must be non-empty");
    }

    FitConfig fit_config(std::uint64_t seed) const {
        FitConfig c;
        c.tol = tol;
        c.max_iter = max_iter;
        c.delta = delta;
        c.warmup = warmup;
        c.seed = seed;
        return c;
    }
};

struct SweepRecord {
    std::size_t n = 0;
    Method method = Method::GFAB;
    std::size_t K = 0;
    std::uint64_t seed = 0;
    double objective = std::numeric_limits<double>::quiet_NaN();
    std::size_t selected_k = 0;
    std::size_t iterations = 0;
    double wall_ms = 0.0;
    std::string status = "ok";
};

/// X = Z·Wᵀ + E with W ~ U[0,1]^{D×K′}, Z ~ N(0, I), E ~ N(0, σ²), drawn in that order.
inline Matrix generate_synthetic(const ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
    Rng rng = substream(seed, 1);
    Matrix w(c.d, c.k_true);
    for (double& v : w.values()) v = rng.uniform();
    const Matrix z(n, c.k_true, draw_gaussian(rng, n * c.k_true));
    Matrix e(n, c.d, draw_gaussian(rng, n * c.d));
    e *= c.sigma_noise;
    return z * w.transpose() + e;
}

inline std::size_t sweep_record_count(const ExperimentConfig& c) {
    std::size_t per_seed = 0;
    for (Method m : c.methods) per_seed += (m == Method::GFAB || m == Method::FABGMM) ? 1 : c.k_max - 1;
    return per_seed * c.seeds.size() * c.n_list.size();
}

/// Runs every (method, K, seed) cell for every N. BICEM rows reuse the EM fit of the same cell,
/// since the two differ only by the reported penalty. Output is sorted by (N, method, K, seed).
inline std::vector<SweepRecord> run_sweep(const ExperimentConfig& c, std::size_t jobs = 1) {
    c.validate();
    auto has = [&](Method m) { return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end(); };

    struct Cell {
        std::size_t n;
        Method method;
        std::size_t k;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t n : c.n_list)
        for (std::uint64_t s : c.seeds) {
            if (has(Method::GFAB)) cells.push_back({n, Method::GFAB, c.k_max, s});
            if (has(Method::FABGMM)) cells.push_back({n, Method::FABGMM, c.k_max, s});
            for (std::size_t k = 2; k <= c.k_max; ++k) {
                if (has(Method::EM) || has(Method::BICEM)) cells.push_back({n, Method::EM, k, s});
                if (has(Method::VB1)) cells.push_back({n, Method::VB1, k, s});
                if (has(Method::VB2)) cells.push_back({n, Method::VB2, k, s});
            }
        }

    std::map<std::pair<std::size_t, std::uint64_t>, DataMatrix> data;
    for (std::size_t n : c.n_list)
        for (std::uint64_t s : c.seeds) data[{n, s}] = make_data(generate_synthetic(c, n, s));

    std::vector<SweepRecord> out;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& cell = cells[i];
            const DataMatrix& x = data.at({cell.n, cell.seed});
            const FitConfig fc = c.fit_config(cell.seed);
            std::vector<SweepRecord> local;
            SweepRecord rec;
            rec.n = cell.n;
            rec.method = cell.method;
            rec.K = cell.k;
            rec.seed = cell.seed;
            try {
                FitReport rep;
                switch (cell.method) {
                    case Method::GFAB: rep = fit_gfab_bpca(x, cell.k, fc); break;
                    case Method::FABGMM: rep = fit_fab_gmm(x, cell.k, fc); break;
                    case Method::VB1: rep = fit_vb(x, cell.k, fc, VbMode::VB1); break;
                    case Method::VB2: rep = fit_vb(x, cell.k, fc, VbMode::VB2); break;
                    default: rep = fit_em_bpca(x, cell.k, fc, EmMode::EM); break;
                }
                rec.objective = rep.final_objective;
                rec.selected_k = rep.selected_k;
                rec.iterations = rep.iterations;
                rec.wall_ms = rep.wall_ms;
                if (!rep.converged) rec.status = "max_iter";
            } catch (const std::exception& e) {
                rec.status = std::string("failed: ") + e.what();
            }
            if (cell.method == Method::EM) {
                if (has(Method::BICEM)) {
                    SweepRecord b = rec;
                    b.method = Method::BICEM;
                    b.objective -= bicem_penalty(static_cast<double>(c.d * cell.k + 1), static_cast<double>(cell.n));
                    local.push_back(b);
                }
                if (has(Method::EM)) local.push_back(rec);
            } else {
                local.push_back(rec);
            }
            std::lock_guard lock(mu);
            out.insert(out.end(), local.begin(), local.end());
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::max<std::size_t>(jobs, 1); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::sort(out.begin(), out.end(), [](const SweepRecord& a, const SweepRecord& b) {
        return std::tie(a.n, a.method, a.K, a.seed) < std::tie(b.n, b.method, b.K, b.seed);
    });
    return out;
}

struct SkewRow {
    std::size_t n = 0;
    double tau = 0.0;
    double q_binomial = 0.0;
    double penalty = 0.0;
    double skewed = 0.0;
};

struct SkewTable {
    std::size_t n = 0;
    double omega = 0.0;
    std::vector<SkewRow> rows;
};

inline double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

/// Binomial q(Nτ = n), the FIC penalty weight exp(−½(log₊ Nτ + log₊ N(1−τ))) and their
/// normalized product, for the two-component unit-variance mixture with estimated means
/// mu1, mu2 and data drawn from pi_star·N(0,1) + (1 − pi_star)·N(1,1).
inline SkewTable demo_skew_gmm(std::size_t n, double mu1, double mu2, double pi_star) {
    require(n >= 1, "demo_skew_gmm: n must be at least 1");
    require(pi_star > 0.0 && pi_star < 1.0, "demo_skew_gmm: pi_star must lie in (0, 1)");
    auto expected_sq = [&](double mu) { return pi_star * (1.0 + mu * mu) + (1.0 - pi_star) * (1.0 + (1.0 - mu) * (1.0 - mu)); };
    auto g_star = [&](double mu) { return std::exp(-0.5 * expected_sq(mu)) / std::sqrt(2.0 * std::numbers::pi); };
    const double a = pi_star * g_star(mu1), b = (1.0 - pi_star) * g_star(mu2);
    SkewTable t;
    t.n = n;
    t.omega = a / (a + b);

    const double N = static_cast<double>(n);
    std::vector<double> logq(n + 1), logw(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double k = static_cast<double>(i);
        logq[i] = std::lgamma(N + 1.0) - std::lgamma(k + 1.0) - std::lgamma(N - k + 1.0);
        if (i > 0) logq[i] += k * std::log(t.omega);
        if (i < n) logq[i] += (N - k) * std::log1p(-t.omega);
        logw[i] = -0.5 * (log_plus(k) + log_plus(N - k));
    }
    auto normalize = [](std::vector<double> logv) {
        const double peak = *std::max_element(logv.begin(), logv.end());
        double s = 0.0;
        for (double& v : logv) s += (v = std::exp(v - peak));
        for (double& v : logv) v /= s;
        return logv;
    };
    std::vector<double> logs(n + 1);
    for (std::size_t i = 0; i <= n; ++i) logs[i] = logq[i] + logw[i];
    const auto q = normalize(logq), w = normalize(logw), s = normalize(logs);
    for (std::size_t i = 0; i <= n; ++i) t.rows.push_back({i, static_cast<double>(i) / N, q[i], w[i], s[i]});
    return t;
}

}  // namespace lvmselect
