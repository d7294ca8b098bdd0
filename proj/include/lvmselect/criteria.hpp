#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "lvmselect/errors.hpp"
#include "lvmselect/numerics.hpp"

namespace lvmselect {

/// Sum of log-eigenvalues at or above `floor`, and how many were excluded.
inline std::pair<double, std::size_t> pseudo_logdet(const Matrix& a, double floor) {
    require(floor > 0.0, "pseudo_logdet: floor must be positive");
    if (a.rows() == 0) return {0.0, 0};
    double s = 0.0;
    std::size_t excluded = 0;
    for (double e : sym_eig(a).eigenvalues) {
        if (e >= floor) s += std::log(e);
        else ++excluded;
    }
    return {s, excluded};
}

inline std::size_t kappa(const Matrix& f, double floor) {
    require(floor > 0.0, "kappa: floor must be positive");
    if (f.rows() == 0) return 0;
    std::size_t k = 0;
    for (double e : sym_eig(f).eigenvalues)
        if (e >= floor) ++k;
    return k;
}

inline double bicem_penalty(double d_theta, double n) {
    require(n >= 2.0, "bicem_penalty: n must be at least 2");
    return 0.5 * d_theta * std::log(n);
}

/// One-parameter log-joint on [lo, hi] built from n samples.
struct ScalarModel {
    std::function<double(double)> loglik;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 1;
};

struct PenaltyBreakdown {
    double loglik_at_mode = 0.0;
    double half_logdet_term = 0.0;
    double dim_term = 0.0;
    double total = 0.0;
    double mode = 0.0;
};

namespace detail {
inline double safe_eval(const ScalarModel& m, double t) {
    const double v = m.loglik(t);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
}
}  // namespace detail

inline PenaltyBreakdown laplace_log_marginal(const ScalarModel& m) {
    require(m.lo < m.hi, "laplace_log_marginal: empty interval");
    require(m.n >= 1, "laplace_log_marginal: n must be positive");
    constexpr std::size_t grid = 2000;
    const double step = (m.hi - m.lo) / grid;
    std::vector<double> vals(grid + 1);
    for (std::size_t i = 0; i <= grid; ++i) vals[i] = detail::safe_eval(m, m.lo + step * i);

    std::size_t arg = 0;
    for (std::size_t i = 1; i <= grid; ++i)
        if (vals[i] > vals[arg]) arg = i;
    std::size_t last = arg;
    while (last < grid && vals[last + 1] == vals[arg]) ++last;
    arg = (arg + last) / 2;
    if (arg == 0 || arg == grid) throw BoundaryMode("laplace_log_marginal: mode lies on the interval boundary");

    std::size_t peaks = 0;
    for (std::size_t i = 1; i < grid; ++i)
        if (vals[i] > vals[i - 1] && vals[i] > vals[i + 1]) ++peaks;
    require(peaks <= 1, "laplace_log_marginal: log-joint is not unimodal on the grid");

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = m.lo + step * (arg - 1);
    double b = m.lo + step * (arg + 1);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = detail::safe_eval(m, c);
    double fd = detail::safe_eval(m, d);
    while (b - a > 1e-10) {
        if (fc >= fd) {
            b = d; d = c; fd = fc;
            c = b - inv_phi * (b - a);
            fc = detail::safe_eval(m, c);
        } else {
            a = c; c = d; fc = fd;
            d = a + inv_phi * (b - a);
            fd = detail::safe_eval(m, d);
        }
    }
    const double mode = 0.5 * (a + b);
    const double lmode = detail::safe_eval(m, mode);
    const double h = 1e-4 * (1.0 + std::abs(mode));
    const double second = (detail::safe_eval(m, mode + h) - 2.0 * lmode + detail::safe_eval(m, mode - h)) / (h * h);
    const double f = -second / static_cast<double>(m.n);
    if (!(f > 0.0) || !std::isfinite(f)) throw DegenerateMatrix("laplace_log_marginal: non-positive Fisher information", f);

    PenaltyBreakdown out;
    out.mode = mode;
    out.loglik_at_mode = lmode;
    out.half_logdet_term = 0.5 * std::log(f);
    out.dim_term = -0.5 * std::log(2.0 * std::numbers::pi / static_cast<double>(m.n));
    out.total = out.loglik_at_mode - out.half_logdet_term - out.dim_term;
    return out;
}

inline double quadrature_log_marginal(const ScalarModel& m, std::size_t panels = 128) {
    require(panels >= 100, "quadrature_log_marginal: at least 100 panels required");
    require(m.lo < m.hi, "quadrature_log_marginal: empty interval");
    if (panels % 2) ++panels;

    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= panels; ++i)
        peak = std::max(peak, detail::safe_eval(m, m.lo + (m.hi - m.lo) * i / panels));
    if (!std::isfinite(peak)) throw NumericalFailure("quadrature_log_marginal: log-joint not finite anywhere on the grid");

    auto simpson = [&](std::size_t p) {
        const double h = (m.hi - m.lo) / p;
        double s = 0.0;
        for (std::size_t i = 0; i <= p; ++i) {
            const double w = (i == 0 || i == p) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            s += w * std::exp(detail::safe_eval(m, m.lo + h * i) - peak);
        }
        return std::log(s * h / 3.0) + peak;
    };

    double prev = simpson(panels);
    for (std::size_t p = panels * 2; p <= (std::size_t{1} << 20); p *= 2) {
        const double cur = simpson(p);
        if (std::abs(cur - prev) < 1e-8) return cur;
        prev = cur;
    }
    throw NumericalFailure("quadrature_log_marginal: no convergence within 2^20 panels");
}

/// Central-difference Hessian of −loglik/n, symmetrized.
inline Matrix hessian_fd(const std::function<double(const std::vector<double>&)>& loglik,
                         const std::vector<double>& theta, std::size_t n) {
    const std::size_t p = theta.size();
    std::vector<double> h(p);
    for (std::size_t i = 0; i < p; ++i) h[i] = 1e-4 * (1.0 + std::abs(theta[i]));
    auto eval = [&](const std::vector<double>& t) {
        const double v = loglik(t);
        if (!std::isfinite(v)) throw NumericalFailure("hessian_fd: non-finite evaluation");
        return v;
    };
    const double f0 = eval(theta);
    Matrix hess(p, p);
    std::vector<double> t = theta;
    for (std::size_t i = 0; i < p; ++i) {
        t[i] = theta[i] + h[i];
        const double fp = eval(t);
        t[i] = theta[i] - h[i];
        const double fm = eval(t);
        t[i] = theta[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for (std::size_t j = i + 1; j < p; ++j) {
            double acc = 0.0;
            for (int si : {1, -1})
                for (int sj : {1, -1}) {
                    t[i] = theta[i] + si * h[i];
                    t[j] = theta[j] + sj * h[j];
                    acc += si * sj * eval(t);
                }
            t[i] = theta[i];
            t[j] = theta[j];
            hess(i, j) = hess(j, i) = acc / (4.0 * h[i] * h[j]);
        }
    }
    hess *= -1.0 / static_cast<double>(n);
    return symmetrize(hess);
}

}  // namespace lvmselect
