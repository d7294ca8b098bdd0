#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <tuple>
#include <vector>

#include "lvmselect/bpca.hpp"
#include "lvmselect/numerics.hpp"
#include "lvmselect/types.hpp"

namespace lvmselect {

/// Isotropic Gaussian mixture with a fixed, known component variance.
struct GmmParams {
    std::vector<double> beta;
    Matrix means;  // K×D
    double sigma2 = 1.0;
    std::size_t K() const { return beta.size(); }
};

struct Responsibilities {
    Matrix r;                 // N×K
    std::vector<double> tau;  // column means of r
    std::size_t K() const { return r.cols(); }
};

inline Responsibilities make_responsibilities(Matrix r) {
    Responsibilities out;
    out.tau.assign(r.cols(), 0.0);
    for (std::size_t n = 0; n < r.rows(); ++n)
        for (std::size_t k = 0; k < r.cols(); ++k) out.tau[k] += r(n, k);
    for (double& t : out.tau) t /= static_cast<double>(std::max<std::size_t>(r.rows(), 1));
    out.r = std::move(r);
    return out;
}

inline double log_gaussian_iso(const double* x, const double* m, std::size_t d, double sigma2) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += (x[j] - m[j]) * (x[j] - m[j]);
    return -0.5 * ss / sigma2 - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * sigma2);
}

namespace detail {

inline Responsibilities e_step(const DataMatrix& x, const GmmParams& p, const std::vector<double>* log_shrink) {
    const std::size_t N = x.n(), K = p.K(), D = x.d();
    require(p.means.rows() == K && p.means.cols() == D, "e_step: parameter shapes do not match the data");
    Matrix r(N, K);
    std::vector<double> logw(K);
    for (std::size_t n = 0; n < N; ++n) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            logw[k] = std::log(p.beta[k]) + log_gaussian_iso(x.values.row(n), p.means.row(k), D, p.sigma2);
            if (log_shrink) logw[k] += (*log_shrink)[k];
            peak = std::max(peak, logw[k]);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) total += (r(n, k) = std::exp(logw[k] - peak));
        for (std::size_t k = 0; k < K; ++k) r(n, k) /= total;
    }
    return make_responsibilities(std::move(r));
}

}  // namespace detail

/// FAB E-step: posterior responsibilities scaled by exp(−D / (2·N·max(τ_prev_k, delta))).
inline Responsibilities fab_e_step(const DataMatrix& x, const GmmParams& p, const std::vector<double>& tau_prev,
                                   double delta) {
    require(tau_prev.size() == p.K(), "fab_e_step: tau_prev has the wrong length");
    std::vector<double> shrink(p.K());
    for (std::size_t k = 0; k < p.K(); ++k) {
        require(tau_prev[k] >= 0.0, "fab_e_step: tau_prev must be non-negative");
        shrink[k] = -static_cast<double>(x.d()) / (2.0 * static_cast<double>(x.n()) * std::max(tau_prev[k], delta));
    }
    return detail::e_step(x, p, &shrink);
}

inline Responsibilities em_e_step_gmm(const DataMatrix& x, const GmmParams& p) { return detail::e_step(x, p, nullptr); }

inline GmmParams m_step_gmm(const DataMatrix& x, const Responsibilities& r, double sigma2 = 1.0) {
    const std::size_t N = x.n(), K = r.K(), D = x.d();
    GmmParams p;
    p.sigma2 = sigma2;
    p.beta = r.tau;
    p.means = Matrix(K, D);
    for (std::size_t k = 0; k < K; ++k) require(r.tau[k] > 0.0, "m_step_gmm: empty component; prune before the M-step");
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
            const double w = r.r(n, k);
            for (std::size_t j = 0; j < D; ++j) p.means(k, j) += w * x.values(n, j);
        }
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < D; ++j) p.means(k, j) /= r.tau[k] * static_cast<double>(N);
    return p;
}

inline double expected_loglik_gmm(const DataMatrix& x, const GmmParams& p, const Responsibilities& r) {
    double s = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t k = 0; k < p.K(); ++k) {
            const double w = r.r(n, k);
            if (w == 0.0) continue;
            s += w * (std::log(p.beta[k]) + log_gaussian_iso(x.values.row(n), p.means.row(k), x.d(), p.sigma2));
        }
    return s;
}

inline double entropy_responsibilities(const Responsibilities& r) {
    double h = 0.0;
    for (double v : r.r.values())
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

/// FIC for mixtures: E_q[log p] − Σ_k (D/2)·log max(τ_k, delta) + H(r) − (D_Θ/2)·log N.
inline double objective_fic_mm(const DataMatrix& x, const GmmParams& p, const Responsibilities& r, double delta) {
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d()), K = static_cast<double>(p.K());
    double pen = 0.0;
    for (double t : r.tau) pen -= 0.5 * D * std::log(std::max(t, delta));
    const double d_theta = K * D + K - 1.0;
    return expected_loglik_gmm(x, p, r) + pen + entropy_responsibilities(r) - 0.5 * d_theta * std::log(N);
}

/// Removes components with τ_k < delta and renormalizes r and β.
inline std::tuple<GmmParams, Responsibilities, PruneEvent> prune_gmm(const GmmParams& p, const Responsibilities& r,
                                                                     double delta) {
    require(delta > 0.0 && delta < 1.0, "prune_gmm: delta must lie in (0, 1)");
    PruneEvent ev;
    ev.k_before = p.K();
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < r.K(); ++k) {
        if (r.tau[k] >= delta) keep.push_back(k);
        else ev.dropped_eigenvalues.push_back(r.tau[k]);
    }
    ev.k_after = keep.size();
    if (ev.dropped_eigenvalues.empty()) return {p, r, ev};
    if (keep.empty()) throw ModelCollapsed("prune_gmm: every component fell below the threshold");

    Matrix rr = select_columns(r.r, keep);
    for (std::size_t n = 0; n < rr.rows(); ++n) {
        double s = 0.0;
        for (std::size_t k = 0; k < keep.size(); ++k) s += rr(n, k);
        if (s > 0.0) {
            for (std::size_t k = 0; k < keep.size(); ++k) rr(n, k) /= s;
        } else {
            for (std::size_t k = 0; k < keep.size(); ++k) rr(n, k) = 1.0 / static_cast<double>(keep.size());
        }
    }
    GmmParams out;
    out.sigma2 = p.sigma2;
    double bsum = 0.0;
    for (std::size_t k : keep) bsum += p.beta[k];
    for (std::size_t k : keep) out.beta.push_back(p.beta[k] / bsum);
    out.means = Matrix(keep.size(), p.means.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (std::size_t j = 0; j < p.means.cols(); ++j) out.means(i, j) = p.means(keep[i], j);
    return {out, make_responsibilities(std::move(rr)), ev};
}

inline GmmParams initial_gmm(const DataMatrix& x, std::size_t k, std::uint64_t seed, double sigma2) {
    require(k >= 1 && k <= x.n(), "initial_gmm: k must lie in [1, N]");
    Rng rng = substream(seed, 2);
    std::vector<std::size_t> idx(x.n());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(x.n() - i)]);
    GmmParams p;
    p.sigma2 = sigma2;
    p.beta.assign(k, 1.0 / static_cast<double>(k));
    p.means = Matrix(k, x.d());
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < x.d(); ++j) p.means(i, j) = x.values(idx[i], j);
    return p;
}

/// FAB for Gaussian mixtures. With `shrink` off and pruning disabled (delta ≤ 0 via config) it
/// reduces to plain EM while still reporting the FIC objective.
inline FitReport fit_fab_gmm(const DataMatrix& x, std::size_t k_init, const FitConfig& config, bool shrink = true) {
    const auto start = std::chrono::steady_clock::now();
    FitReport rep;
    rep.method = "FABGMM";
    rep.model = "gmm";
    rep.seed = config.seed;
    rep.k_init = k_init;
    const double delta = config.gmm_delta > 0.0 ? config.gmm_delta : 1e-2 / static_cast<double>(k_init);

    GmmParams p = initial_gmm(x, k_init, config.seed, config.sigma2);
    std::vector<double> tau_prev = p.beta;
    ConvergenceTracker tracker(config.tol);
    Responsibilities r;
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        r = shrink ? fab_e_step(x, p, tau_prev, delta) : em_e_step_gmm(x, p);
        if (shrink) {
            const double before = objective_fic_mm(x, p, r, delta);
            auto [p2, r2, ev] = prune_gmm(p, r, delta);
            if (!ev.dropped_eigenvalues.empty()) {
                ev.iteration = it;
                ev.objective_before = before;
                ev.objective_after = objective_fic_mm(x, p2, r2, delta);
                rep.prune_events.push_back(ev);
                p = std::move(p2);
                r = std::move(r2);
            }
        }
        p = m_step_gmm(x, r, config.sigma2);
        tau_prev = r.tau;
        const double value = objective_fic_mm(x, p, r, delta);
        rep.objective_trajectory.push_back(value);
        rep.k_trajectory.push_back(p.K());
        rep.iterations = it + 1;
        if (tracker.push(value)) {
            rep.converged = true;
            break;
        }
    }
    rep.selected_k = p.K();
    rep.final_objective = rep.objective_trajectory.back();
    rep.wall_ms = detail::elapsed_ms(start);
    return rep;
}

}  // namespace lvmselect
