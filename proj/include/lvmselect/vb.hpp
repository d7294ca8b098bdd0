#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <chrono>
#include <cmath>
#include <numbers>
#include <vector>

#include "lvmselect/bpca.hpp"
#include "lvmselect/numerics.hpp"
#include "lvmselect/types.hpp"

namespace lvmselect {

enum class VbMode { VB1, VB2 };

struct VbHyper {
    double a_lambda = 0.01;
    double b_lambda = 0.01;
    double a_alpha = 0.01;
    double b_alpha = 0.01;
};

struct GammaFactor {
    double shape = 1.0;
    double rate = 1.0;
    double mean() const { return shape / rate; }
    double log_mean() const { return boost::math::digamma(shape) - std::log(rate); }
    double entropy() const {
        return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * boost::math::digamma(shape);
    }
};

/// Mean-field state for variational Bayesian PCA. Rows of W share one covariance.
struct VbState {
    Matrix w_mean;  // D×K
    Matrix w_cov;   // K×K
    GammaFactor q_lambda;
    std::vector<GammaFactor> q_alpha;  // empty under VB1 (α fixed at 1)
    GaussianLatentPosterior q_z;
    std::size_t K() const { return w_mean.cols(); }
};

struct VbBound {
    double loglik = 0.0;
    double log_p_z = 0.0;
    double log_p_w = 0.0;
    double log_p_lambda = 0.0;
    double log_p_alpha = 0.0;
    double entropy_z = 0.0;
    double entropy_w = 0.0;
    double entropy_lambda = 0.0;
    double entropy_alpha = 0.0;
    double total = 0.0;
};

namespace detail {

inline Matrix expected_wtw(const VbState& s, std::size_t d) {
    return symmetrize(transpose_times(s.w_mean, s.w_mean) + static_cast<double>(d) * s.w_cov);
}

inline std::vector<double> alpha_means(const VbState& s) {
    std::vector<double> a(s.K(), 1.0);
    for (std::size_t k = 0; k < s.q_alpha.size(); ++k) a[k] = s.q_alpha[k].mean();
    return a;
}

inline double gamma_log_prior(double a0, double b0, const GammaFactor& q) {
    return a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * q.log_mean() - b0 * q.mean();
}

}  // namespace detail

inline VbState initial_vb(const DataMatrix& x, std::size_t k, std::uint64_t seed, VbMode mode,
                          const VbHyper& h = {}) {
    const BpcaParams p = detail::initial_bpca(x, k, seed);
    VbState s;
    s.w_mean = p.W;
    s.w_cov = Matrix(k, k);
    s.q_lambda.shape = h.a_lambda + 0.5 * static_cast<double>(x.n() * x.d());
    s.q_lambda.rate = s.q_lambda.shape / p.lambda;
    if (mode == VbMode::VB2) {
        const double a = h.a_alpha + 0.5 * static_cast<double>(x.d());
        s.q_alpha.assign(k, GammaFactor{a, a});
    }
    return s;
}

/// Residual E‖X − ZWᵀ‖²_F under q(Z)q(W).
inline double vb_residual(const DataMatrix& x, const VbState& s) {
    const Matrix cp = x.scatter * s.q_z.projection;
    return x.total_square() - 2.0 * frobenius_dot(cp, s.w_mean) +
           frobenius_dot(detail::expected_wtw(s, x.d()), s.q_z.second_moment);
}

inline VbBound vb_lower_bound(const DataMatrix& x, const VbState& s, const VbHyper& h = {}) {
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d()), K = static_cast<double>(s.K());
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const Matrix eww = detail::expected_wtw(s, x.d());
    const auto alpha = detail::alpha_means(s);

    VbBound b;
    b.loglik = 0.5 * N * D * (s.q_lambda.log_mean() - log2pi) - 0.5 * s.q_lambda.mean() * vb_residual(x, s);
    b.log_p_z = -0.5 * N * K * log2pi - 0.5 * trace(s.q_z.second_moment);
    b.log_p_w = -0.5 * D * K * log2pi;
    for (std::size_t k = 0; k < s.K(); ++k) {
        const double log_alpha = s.q_alpha.empty() ? 0.0 : s.q_alpha[k].log_mean();
        b.log_p_w += 0.5 * D * log_alpha - 0.5 * alpha[k] * eww(k, k);
    }
    b.log_p_lambda = detail::gamma_log_prior(h.a_lambda, h.b_lambda, s.q_lambda);
    for (const auto& qa : s.q_alpha) b.log_p_alpha += detail::gamma_log_prior(h.a_alpha, h.b_alpha, qa);
    b.entropy_z = entropy_bpca(s.q_z, x.n());
    b.entropy_w = 0.5 * D * K * (1.0 + log2pi) + 0.5 * D * logdet_pd(s.w_cov);
    b.entropy_lambda = s.q_lambda.entropy();
    for (const auto& qa : s.q_alpha) b.entropy_alpha += qa.entropy();
    b.total = b.loglik + b.log_p_z + b.log_p_w + b.log_p_lambda + b.log_p_alpha + b.entropy_z + b.entropy_w +
              b.entropy_lambda + b.entropy_alpha;
    return b;
}

/// One sweep of conjugate coordinate updates in the order qZ, qW, qλ, qα.
inline VbState vb_update_cycle(const DataMatrix& x, const VbState& in, VbMode mode, const VbHyper& h = {}) {
    const std::size_t K = in.K();
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d());
    VbState s = in;
    const double lam = s.q_lambda.mean();

    Matrix sigma_z = inverse_spd(Matrix::identity(K) + lam * detail::expected_wtw(s, x.d()));
    Matrix proj = lam * (s.w_mean * sigma_z);
    s.q_z = make_posterior(x, std::move(proj), std::move(sigma_z));

    const auto alpha = detail::alpha_means(s);
    s.w_cov = inverse_spd(Matrix::diagonal(alpha) + lam * s.q_z.second_moment);
    s.w_mean = lam * ((x.scatter * s.q_z.projection) * s.w_cov);

    s.q_lambda.shape = h.a_lambda + 0.5 * N * D;
    s.q_lambda.rate = h.b_lambda + 0.5 * vb_residual(x, s);

    if (mode == VbMode::VB2) {
        const Matrix eww = detail::expected_wtw(s, x.d());
        s.q_alpha.resize(K);
        for (std::size_t k = 0; k < K; ++k) s.q_alpha[k] = {h.a_alpha + 0.5 * D, h.b_alpha + 0.5 * eww(k, k)};
    }
    if (!all_finite(s.w_mean) || !std::isfinite(s.q_lambda.rate))
        throw NumericalFailure("vb_update_cycle: non-finite sufficient statistics");
    return s;
}

inline FitReport fit_vb(const DataMatrix& x, std::size_t k, const FitConfig& config, VbMode mode,
                        VbState* final_state = nullptr, const VbHyper& h = {}) {
    const auto start = std::chrono::steady_clock::now();
    FitReport rep;
    rep.method = mode == VbMode::VB1 ? "VB1" : "VB2";
    rep.model = "bpca";
    rep.seed = config.seed;
    rep.k_init = k;
    VbState s = initial_vb(x, k, config.seed, mode, h);
    ConvergenceTracker tracker(config.tol);
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        s = vb_update_cycle(x, s, mode, h);
        const double bound = vb_lower_bound(x, s, h).total;
        rep.objective_trajectory.push_back(bound);
        rep.k_trajectory.push_back(k);
        rep.iterations = it + 1;
        if (tracker.push(bound)) {
            rep.converged = true;
            break;
        }
    }
    rep.selected_k = k;
    rep.final_objective = rep.objective_trajectory.back();
    rep.wall_ms = detail::elapsed_ms(start);
    if (final_state) *final_state = std::move(s);
    return rep;
}

}  // namespace lvmselect
