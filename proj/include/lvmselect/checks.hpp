#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lvmselect/criteria.hpp"
#include "lvmselect/gmm.hpp"
#include "lvmselect/numerics.hpp"

namespace lvmselect {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double bound = 0.0;
};

/// log p(X, Z | W, λ) for PPCA with explicit latent values.
inline double bpca_log_joint(const Matrix& x, const Matrix& z, const Matrix& w, double lambda) {
    const double log2pi = std::log(2.0 * std::numbers::pi);
    const std::size_t N = x.rows(), D = x.cols(), K = z.cols();
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < D; ++d) {
            double pred = 0.0;
            for (std::size_t k = 0; k < K; ++k) pred += w(d, k) * z(n, k);
            const double r = x(n, d) - pred;
            s += 0.5 * (std::log(lambda) - log2pi) - 0.5 * lambda * r * r;
        }
        for (std::size_t k = 0; k < K; ++k) s += -0.5 * log2pi - 0.5 * z(n, k) * z(n, k);
    }
    return s;
}

/// Relative max-norm gap between the finite-difference Hessian of −log p/N in vec(W) and
/// the analytic block-diagonal λ·ZᵀZ/N.
inline double bpca_hessian_gap(std::uint64_t seed) {
    Rng rng(seed * 7919 + 17);
    const std::size_t N = 40, D = 3, K = 2;
    const Matrix x(N, D, draw_gaussian(rng, N * D));
    const Matrix z(N, K, draw_gaussian(rng, N * K));
    const Matrix w0(D, K, draw_gaussian(rng, D * K));
    const double lambda = 0.5 + 1.5 * rng.uniform();
    auto f = [&](const std::vector<double>& v) { return bpca_log_joint(x, z, Matrix(D, K, v), lambda); };
    const Matrix fd = hessian_fd(f, w0.values(), N);
    const Matrix ztz = transpose_times(z, z);
    Matrix analytic(D * K, D * K);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < K; ++l) analytic(d * K + k, d * K + l) = lambda * ztz(k, l) / N;
    return max_abs(fd - analytic) / max_abs(analytic);
}

/// Same comparison for a mixture's component means against (τ_k/σ²)·I, with one-hot Z
/// sampled from random responsibilities. Returns the worst component.
inline double gmm_hessian_gap(std::uint64_t seed) {
    Rng rng(seed * 104729 + 3);
    const std::size_t N = 60, D = 3, K = 3;
    const double sigma2 = 0.5 + rng.uniform();
    const Matrix x(N, D, draw_gaussian(rng, N * D));
    Matrix means(K, D, draw_gaussian(rng, K * D));
    std::vector<double> beta{0.5, 0.3, 0.2};
    std::vector<std::size_t> label(N);
    for (std::size_t n = 0; n < N; ++n) {
        double u = rng.uniform(), acc = 0.0;
        label[n] = K - 1;
        for (std::size_t k = 0; k < K; ++k) {
            acc += beta[k];
            if (u < acc) {
                label[n] = k;
                break;
            }
        }
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        auto f = [&](const std::vector<double>& m) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t c = label[n];
                const double* mu = c == k ? m.data() : means.row(c);
                s += std::log(beta[c]) + log_gaussian_iso(x.row(n), mu, D, sigma2);
            }
            return s;
        };
        const std::vector<double> mk(means.row(k), means.row(k) + D);
        const Matrix fd = hessian_fd(f, mk, N);
        double count = 0.0;
        for (std::size_t n = 0; n < N; ++n) count += label[n] == k;
        const double tau = count / N;
        if (tau == 0.0) continue;
        const Matrix analytic = Matrix::identity(D) * (tau / sigma2);
        worst = std::max(worst, max_abs(fd - analytic) / max_abs(analytic));
    }
    return worst;
}

/// Conjugate normal-mean model: n unit-variance draws, flat prior on a wide interval.
inline ScalarModel gaussian_scalar_model(std::size_t n, std::uint64_t seed) {
    Rng rng(seed + 101);
    auto xs = draw_gaussian(rng, n);
    double mean = 0.0;
    for (double& v : xs) mean += (v += 0.3);
    mean /= static_cast<double>(n);
    ScalarModel m;
    m.n = n;
    m.lo = mean - 10.0;
    m.hi = mean + 10.0;
    m.loglik = [xs](double t) {
        double s = 0.0;
        for (double v : xs) s += -0.5 * (v - t) * (v - t) - 0.5 * std::log(2.0 * std::numbers::pi);
        return s;
    };
    return m;
}

/// Bernoulli success probability with `successes` out of n and a flat prior on (0, 1).
inline ScalarModel bernoulli_scalar_model(std::size_t n, std::size_t successes) {
    ScalarModel m;
    m.n = n;
    m.lo = 0.0;
    m.hi = 1.0;
    const double k = static_cast<double>(successes), f = static_cast<double>(n - successes);
    m.loglik = [k, f](double t) {
        if (t <= 0.0 || t >= 1.0) return -std::numeric_limits<double>::infinity();
        return k * std::log(t) + f * std::log1p(-t);
    };
    return m;
}

inline double laplace_gap(const ScalarModel& m) {
    return std::abs(laplace_log_marginal(m).total - quadrature_log_marginal(m));
}

/// Spread over τ ∈ {0.01, …, 0.99} of −½·log|F| − (−(D/2)·log τ), with F assembled as the
/// average per-sample Hessian of a unit-variance Gaussian mean over N = 100 samples of which τN
/// belong to the component.
inline double exp_family_spread(std::size_t d, double sigma2) {
    const std::size_t N = 100;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t t = 1; t <= 99; ++t) {
        Matrix f(d, d);
        for (std::size_t n = 0; n < t; ++n) f += Matrix::identity(d) * (1.0 / sigma2);
        f *= 1.0 / static_cast<double>(N);
        const double tau = static_cast<double>(t) / static_cast<double>(N);
        const double fic_term = -0.5 * static_cast<double>(d) * std::log(tau);
        const double diff = -0.5 * logdet_pd(f) - fic_term;
        lo = std::min(lo, diff);
        hi = std::max(hi, diff);
    }
    return hi - lo;
}

inline std::vector<CheckResult> run_checks(std::size_t instances = 20) {
    std::vector<CheckResult> out;
    double worst = 0.0;
    for (std::size_t s = 0; s < instances; ++s) worst = std::max(worst, bpca_hessian_gap(s));
    out.push_back({"hessian_bpca_block", worst < 1e-5, worst, 1e-5});
    worst = 0.0;
    for (std::size_t s = 0; s < instances; ++s) worst = std::max(worst, gmm_hessian_gap(s));
    out.push_back({"hessian_gmm_block", worst < 1e-5, worst, 1e-5});
    worst = 0.0;
    for (std::size_t n : {2, 10, 100}) worst = std::max(worst, laplace_gap(gaussian_scalar_model(n, n)));
    out.push_back({"laplace_gaussian_exact", worst < 1e-6, worst, 1e-6});
    const double e10 = laplace_gap(bernoulli_scalar_model(10, 7));
    const double e1280 = laplace_gap(bernoulli_scalar_model(1280, 896));
    out.push_back({"laplace_bernoulli_shrinks", e1280 < e10, e1280, e10});
    const double spread = exp_family_spread(3, 1.0);
    out.push_back({"exp_family_equivalence", spread < 1e-10, spread, 1e-10});
    return out;
}

}  // namespace lvmselect
