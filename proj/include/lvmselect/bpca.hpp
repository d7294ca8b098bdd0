#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "lvmselect/criteria.hpp"
#include "lvmselect/numerics.hpp"
#include "lvmselect/types.hpp"

namespace lvmselect {

inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kLambdaMax = 1e8;

struct BpcaParams {
    Matrix W;  // D×K
    double lambda = 1.0;
    std::size_t K() const { return W.cols(); }
};

/// Which latent Gram matrix carries the Fisher penalty.
enum class GramKind {
    posterior_mean,  // G = Σ_n μ_n μ_nᵀ
    second_moment,   // S = G + N·Σ
};

/// Gaussian q(Z) with a shared covariance. The means are stored as a projection P (D×K)
/// so that μ_n = Pᵀx_n; every statistic the fitters need then follows from XᵀX.
struct GaussianLatentPosterior {
    Matrix projection;
    Matrix sigma;
    Matrix mean_gram;
    Matrix second_moment;

    std::size_t K() const { return sigma.rows(); }
    Matrix mu(const DataMatrix& x) const { return x.values * projection; }
    const Matrix& gram(GramKind kind) const { return kind == GramKind::posterior_mean ? mean_gram : second_moment; }
};

inline GaussianLatentPosterior make_posterior(const DataMatrix& x, Matrix projection, Matrix sigma) {
    require(projection.rows() == x.d() && projection.cols() == sigma.rows(), "make_posterior: shape mismatch");
    GaussianLatentPosterior q;
    q.mean_gram = symmetrize(transpose_times(projection, x.scatter * projection));
    q.second_moment = q.mean_gram + static_cast<double>(x.n()) * sigma;
    q.projection = std::move(projection);
    q.sigma = std::move(sigma);
    return q;
}

inline double clamp_lambda(double lambda) {
    if (!std::isfinite(lambda)) return kLambdaMax;
    return std::min(kLambdaMax, std::max(kLambdaMin, lambda));
}

struct BpcaPenalty {
    double value = 0.0;
    std::vector<std::size_t> degenerate_indices;  // positions in the descending eigenvalue order
    std::size_t active = 0;
};

/// −(D/2)(κ·log λ + pseudo-logdet(Γ/N, floor)) for the Gram Γ selected by `kind`.
inline BpcaPenalty penalty_bpca(const GaussianLatentPosterior& q, double lambda, std::size_t D, double floor,
                                double n, GramKind kind = GramKind::second_moment) {
    require(floor > 0.0, "penalty_bpca: floor must be positive");
    BpcaPenalty out;
    if (q.K() == 0) return out;
    const auto eig = sym_eig(q.gram(kind) * (1.0 / n)).eigenvalues;
    double logdet = 0.0;
    for (std::size_t k = 0; k < eig.size(); ++k) {
        if (eig[k] >= floor) {
            logdet += std::log(eig[k]);
            ++out.active;
        } else {
            out.degenerate_indices.push_back(k);
        }
    }
    out.value = -0.5 * static_cast<double>(D) * (static_cast<double>(out.active) * std::log(lambda) + logdet);
    return out;
}

/// Σ-weighted residual R = E_q‖X − ZWᵀ‖²_F.
inline double residual_bpca(const DataMatrix& x, const Matrix& W, const GaussianLatentPosterior& q) {
    const Matrix cp = x.scatter * q.projection;
    return x.total_square() - 2.0 * frobenius_dot(cp, W) + frobenius_dot(transpose_times(W, W), q.second_moment);
}

/// E_q[log p(X, Z | W, λ)] in closed form.
inline double expected_loglik_bpca(const DataMatrix& x, const BpcaParams& p, const GaussianLatentPosterior& q) {
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d()), K = static_cast<double>(p.K());
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const double R = residual_bpca(x, p.W, q);
    return 0.5 * N * D * (std::log(p.lambda) - log2pi) - 0.5 * p.lambda * R - 0.5 * N * K * log2pi -
           0.5 * trace(q.second_moment);
}

inline double entropy_bpca(const GaussianLatentPosterior& q, std::size_t n) {
    const double N = static_cast<double>(n), K = static_cast<double>(q.K());
    if (q.K() == 0) return 0.0;
    return 0.5 * N * K * (1.0 + std::log(2.0 * std::numbers::pi)) + 0.5 * N * logdet_pd(q.sigma);
}

struct BpcaObjectiveOptions {
    bool penalized = true;
    GramKind kind = GramKind::posterior_mean;
    /// Floor on eigenvalues of Γ/N; non-positive selects 1/(N·λ), i.e. log₊ on the count scale.
    double floor = -1.0;
};

inline double penalty_floor(const BpcaObjectiveOptions& o, double n, double lambda) {
    return o.floor > 0.0 ? o.floor : 1.0 / (n * lambda);
}

/// Penalized lower bound: E_q[log p] + penalty + H(q) − (D_Θ/2)·log N with D_Θ = D·κ + 1.
/// With `penalized` off this is the EM bound E_q[log p] + H(q).
inline double objective_bpca(const DataMatrix& x, const BpcaParams& p, const GaussianLatentPosterior& q,
                             const BpcaObjectiveOptions& o = {}) {
    const double N = static_cast<double>(x.n());
    double value = expected_loglik_bpca(x, p, q) + entropy_bpca(q, x.n());
    if (!o.penalized) return value;
    const auto pen = penalty_bpca(q, p.lambda, x.d(), penalty_floor(o, N, p.lambda), N, o.kind);
    const double d_theta = static_cast<double>(x.d() * pen.active + 1);
    return value + pen.value - 0.5 * d_theta * std::log(N);
}

struct QUpdateOptions {
    bool penalized = true;
    GramKind kind = GramKind::posterior_mean;
    std::size_t max_inner = 20;
    double inner_tol = 1e-8;
    double floor = -1.0;
};

namespace detail {

/// Σ_k over eigenvalues ≥ floor of v_k v_kᵀ / e_k.
inline Matrix floored_inverse(const Matrix& a, double floor) {
    const auto eig = sym_eig(a);
    const std::size_t K = a.rows();
    Matrix inv(K, K);
    for (std::size_t k = 0; k < K; ++k) {
        if (eig.eigenvalues[k] < floor) continue;
        const double w = 1.0 / eig.eigenvalues[k];
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) inv(i, j) += w * eig.eigenvectors(i, k) * eig.eigenvectors(j, k);
    }
    return inv;
}

inline void check_finite(const Matrix& m, const char* what, std::size_t iteration) {
    if (!all_finite(m))
        throw NumericalFailure(std::string(what) + ": non-finite value at inner iteration " + std::to_string(iteration));
}

}  // namespace detail

/// q-step. Without the penalty this is the textbook PPCA posterior. With the penalty the
/// posterior-mean Gram variant runs a safeguarded minorize-maximize iteration on the means,
/// the second-moment variant the damped fixed point on S.
inline GaussianLatentPosterior update_q_bpca(const DataMatrix& x, const BpcaParams& p,
                                             const GaussianLatentPosterior& q_prev, const QUpdateOptions& o = {}) {
    const std::size_t K = p.K();
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d());
    const Matrix wtw = transpose_times(p.W, p.W);
    const Matrix base = Matrix::identity(K) + p.lambda * wtw;

    if (!o.penalized) {
        Matrix sigma = inverse_spd(base);
        Matrix proj = p.lambda * (p.W * sigma);
        detail::check_finite(proj, "update_q_bpca", 0);
        return make_posterior(x, std::move(proj), std::move(sigma));
    }

    require(q_prev.K() == K, "update_q_bpca: previous posterior has the wrong dimension");
    const BpcaObjectiveOptions obj{true, o.kind, o.floor};
    const double floor = penalty_floor(obj, N, p.lambda);

    if (o.kind == GramKind::posterior_mean) {
        GaussianLatentPosterior cur = make_posterior(x, q_prev.projection, inverse_spd(base));
        double j_cur = objective_bpca(x, p, cur, obj);
        for (std::size_t it = 0; it < o.max_inner; ++it) {
            const Matrix a = base + D * detail::floored_inverse(cur.mean_gram * (1.0 / N), floor) * (1.0 / N);
            Matrix target = p.lambda * (p.W * inverse_spd(a));
            detail::check_finite(target, "update_q_bpca", it);
            GaussianLatentPosterior cand = make_posterior(x, target, cur.sigma);
            double j_cand = objective_bpca(x, p, cand, obj);
            double step = 1.0;
            while (j_cand < j_cur && step > 1e-4) {
                step *= 0.5;
                cand = make_posterior(x, cur.projection + step * (target - cur.projection), cur.sigma);
                j_cand = objective_bpca(x, p, cand, obj);
            }
            if (j_cand < j_cur) break;
            const double change = (j_cand - j_cur) / std::max(std::abs(j_cur), 1e-300);
            cur = std::move(cand);
            j_cur = j_cand;
            if (change < o.inner_tol) break;
        }
        return cur;
    }

    GaussianLatentPosterior cur = q_prev;
    double j_cur = objective_bpca(x, p, cur, obj);
    Matrix s_used = cur.second_moment;
    for (std::size_t it = 0; it < o.max_inner; ++it) {
        GaussianLatentPosterior cand;
        double j_cand = -std::numeric_limits<double>::infinity();
        Matrix s_try = s_used;
        for (int damp = 0; damp < 20; ++damp) {
            const Matrix a = base + D * detail::floored_inverse(s_try * (1.0 / N), floor) * (1.0 / N);
            Matrix sigma = inverse_spd(a);
            Matrix proj = p.lambda * (p.W * sigma);
            detail::check_finite(proj, "update_q_bpca", it);
            cand = make_posterior(x, std::move(proj), std::move(sigma));
            j_cand = objective_bpca(x, p, cand, obj);
            if (j_cand >= j_cur - 1e-12 * std::abs(j_cur)) break;
            s_try = 0.5 * (s_try + cur.second_moment);
        }
        if (j_cand < j_cur) break;
        const double change = frobenius_norm(cand.second_moment - cur.second_moment) /
                              std::max(frobenius_norm(cur.second_moment), 1e-300);
        s_used = cand.second_moment;
        cur = std::move(cand);
        j_cur = j_cand;
        if (change < o.inner_tol) break;
    }
    return cur;
}

/// Expected MJLE: W = XᵀM·S⁻¹ and λ = D·(N − active_dims)/R. active_dims = 0 gives the plain
/// maximizer of E_q[log p].
inline BpcaParams update_theta_bpca(const DataMatrix& x, const GaussianLatentPosterior& q, std::size_t active_dims = 0) {
    const double N = static_cast<double>(x.n()), D = static_cast<double>(x.d());
    const Matrix cp = x.scatter * q.projection;
    BpcaParams p;
    p.W = solve_spd(q.second_moment, cp.transpose()).transpose();
    const double R = residual_bpca(x, p.W, q);
    p.lambda = clamp_lambda(D * (N - static_cast<double>(active_dims)) / std::max(R, 0.0));
    if (!all_finite(p.W)) throw NumericalFailure("update_theta_bpca: non-finite basis");
    return p;
}

/// λ maximizing (ND/2)·log λ − (λ/2)·R − (D/2)·Σ_k log₊(λ·g_k), g_k the eigenvalues of G.
/// The function is concave in log λ and piecewise smooth, so the optimum is one of the
/// per-piece stationary points or one of the kinks.
inline double penalized_lambda(double R, std::size_t n, std::size_t d, const std::vector<double>& gram_eig) {
    const double N = static_cast<double>(n), D = static_cast<double>(d);
    auto f = [&](double u) {
        double v = 0.5 * N * D * u - 0.5 * R * std::exp(u);
        for (double g : gram_eig)
            if (g > 0.0) v -= 0.5 * D * std::max(0.0, u + std::log(g));
        return v;
    };
    const double lo = std::log(kLambdaMin), hi = std::log(kLambdaMax);
    std::vector<double> cand{lo, hi};
    for (std::size_t k = 0; k <= gram_eig.size(); ++k)
        if (N > static_cast<double>(k) && R > 0.0) cand.push_back(std::log(D * (N - static_cast<double>(k)) / R));
    for (double g : gram_eig)
        if (g > 0.0) cand.push_back(-std::log(g));
    double best = lo, best_v = -std::numeric_limits<double>::infinity();
    for (double u : cand) {
        u = std::min(hi, std::max(lo, u));
        const double v = f(u);
        if (v > best_v) {
            best_v = v;
            best = u;
        }
    }
    return std::exp(best);
}

/// Rotates to the eigenbasis of Γ/N and drops coordinates whose eigenvalue is below delta.
inline std::tuple<BpcaParams, GaussianLatentPosterior, PruneEvent> prune_bpca(
    const DataMatrix& x, const BpcaParams& p, const GaussianLatentPosterior& q, double delta,
    GramKind kind = GramKind::second_moment) {
    require(delta > 0.0, "prune_bpca: delta must be positive");
    const double N = static_cast<double>(x.n());
    const auto eig = sym_eig(q.gram(kind) * (1.0 / N));
    PruneEvent ev;
    ev.k_before = p.K();
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < eig.eigenvalues.size(); ++k) {
        if (eig.eigenvalues[k] >= delta) keep.push_back(k);
        else ev.dropped_eigenvalues.push_back(eig.eigenvalues[k]);
    }
    ev.k_after = keep.size();
    if (ev.dropped_eigenvalues.empty()) return {p, q, ev};
    if (keep.empty()) throw ModelCollapsed("prune_bpca: every latent dimension fell below the threshold");

    const Matrix v = select_columns(eig.eigenvectors, keep);
    BpcaParams out;
    out.W = p.W * v;
    out.lambda = p.lambda;
    Matrix sigma = symmetrize(transpose_times(v, q.sigma * v));
    GaussianLatentPosterior q_out;
    q_out.projection = q.projection * v;
    q_out.sigma = std::move(sigma);
    q_out.mean_gram = symmetrize(transpose_times(v, q.mean_gram * v));
    q_out.second_moment = symmetrize(transpose_times(v, q.second_moment * v));
    return {out, q_out, ev};
}

namespace detail {

inline BpcaParams initial_bpca(const DataMatrix& x, std::size_t k, std::uint64_t seed) {
    require(k >= 1 && k <= std::min(x.n(), x.d()), "initial_bpca: k must lie in [1, min(N, D)]");
    Rng rng = substream(seed, 2);
    const auto draws = draw_gaussian(rng, x.d() * k);
    BpcaParams p;
    p.W = Matrix(x.d(), k, draws) * (1.0 / std::sqrt(static_cast<double>(k)));
    p.lambda = clamp_lambda(1.0 / average_variance(x));
    return p;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

enum class EmMode { EM, BICEM };

/// PPCA EM. The trajectory holds the EM bound (or the bound minus (D_Θ/2)·log N for BICEM).
inline FitReport fit_em_bpca(const DataMatrix& x, std::size_t k, const FitConfig& config, EmMode mode = EmMode::EM) {
    const auto start = std::chrono::steady_clock::now();
    FitReport rep;
    rep.method = mode == EmMode::EM ? "EM" : "BICEM";
    rep.model = "bpca";
    rep.seed = config.seed;
    rep.k_init = k;
    BpcaParams p = detail::initial_bpca(x, k, config.seed);
    const double shift = mode == EmMode::BICEM
                             ? bicem_penalty(static_cast<double>(x.d() * k + 1), static_cast<double>(x.n()))
                             : 0.0;
    ConvergenceTracker tracker(config.tol);
    const QUpdateOptions qo{false};
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        const auto q = update_q_bpca(x, p, GaussianLatentPosterior{}, qo);
        p = update_theta_bpca(x, q);
        const double bound = objective_bpca(x, p, q, {false});
        rep.objective_trajectory.push_back(bound - shift);
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
    return rep;
}

struct GfabState {
    BpcaParams params;
    GaussianLatentPosterior q;
};

/// gFAB for Bayesian PCA: penalty-free warm-up, then q-step, guarded prune and θ-step until
/// the objective converges. Directions whose Fisher eigenvalue λ·g_k/N drops below
/// max(delta, 1/N) are pruned when doing so does not lower the objective.
inline FitReport fit_gfab_bpca(const DataMatrix& x, std::size_t k_init, const FitConfig& config,
                               GfabState* final_state = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    const double N = static_cast<double>(x.n());
    FitReport rep;
    rep.method = "GFAB";
    rep.model = "bpca";
    rep.seed = config.seed;
    rep.k_init = k_init;

    BpcaParams p = detail::initial_bpca(x, k_init, config.seed);
    GaussianLatentPosterior q;
    for (std::size_t it = 0; it < std::max<std::size_t>(config.warmup, 1); ++it) {
        q = update_q_bpca(x, p, q, {false});
        p = update_theta_bpca(x, q);
    }
    rep.warmup_iterations = std::max<std::size_t>(config.warmup, 1);

    const BpcaObjectiveOptions obj{true, GramKind::posterior_mean};
    const double count_threshold = std::max(config.delta * N, 1.0);
    ConvergenceTracker tracker(config.tol);

    for (std::size_t it = 0; it < config.max_iter; ++it) {
        q = update_q_bpca(x, p, q, {true, GramKind::posterior_mean});

        const auto eig = sym_eig(q.mean_gram * p.lambda).eigenvalues;
        if (!eig.empty() && eig.back() < count_threshold) {
            const double before = objective_bpca(x, p, q, obj);
            auto [p2, q2, ev] = prune_bpca(x, p, q, count_threshold / (p.lambda * N), GramKind::posterior_mean);
            const Matrix sigma2 = inverse_spd(Matrix::identity(p2.K()) + p2.lambda * transpose_times(p2.W, p2.W));
            q2 = make_posterior(x, q2.projection, sigma2);
            q2 = update_q_bpca(x, p2, q2, {true, GramKind::posterior_mean, 1});
            const double after = objective_bpca(x, p2, q2, obj);
            ev.iteration = it;
            ev.objective_before = before;
            ev.objective_after = after;
            ev.accepted = after >= before;
            if (ev.accepted) {
                p = std::move(p2);
                q = std::move(q2);
            }
            rep.prune_events.push_back(std::move(ev));
        }

        BpcaParams next = update_theta_bpca(x, q);
        next.lambda = penalized_lambda(residual_bpca(x, next.W, q), x.n(), x.d(), sym_eig(q.mean_gram).eigenvalues);
        p = std::move(next);

        const double value = objective_bpca(x, p, q, obj);
        rep.objective_trajectory.push_back(value);
        rep.k_trajectory.push_back(p.K());
        rep.iterations = it + 1;
        if (tracker.push(value)) {
            rep.converged = true;
            break;
        }
    }

    std::size_t active = 0;
    for (double e : sym_eig(q.mean_gram * p.lambda).eigenvalues)
        if (e >= count_threshold) ++active;
    rep.selected_k = active;
    rep.final_objective = rep.objective_trajectory.empty() ? objective_bpca(x, p, q, obj) : rep.objective_trajectory.back();
    rep.wall_ms = detail::elapsed_ms(start);
    if (final_state) *final_state = {p, q};
    return rep;
}

}  // namespace lvmselect
