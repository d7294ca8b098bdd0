#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lvmselect/numerics.hpp"

namespace lvmselect {

/// Observations (N×D) with the cached scatter matrix XᵀX.
struct DataMatrix {
    Matrix values;
    Matrix scatter;
    bool centered = false;

    std::size_t n() const { return values.rows(); }
    std::size_t d() const { return values.cols(); }
    double total_square() const { return trace(scatter); }
};

inline std::vector<double> column_means(const Matrix& x) {
    std::vector<double> mean(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(std::max<std::size_t>(x.rows(), 1));
    return mean;
}

inline DataMatrix make_data(Matrix x, bool center = true) {
    require(all_finite(x), "make_data: non-finite observation");
    if (center) {
        const auto mean = column_means(x);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) -= mean[j];
    }
    DataMatrix out;
    out.scatter = symmetrize(transpose_times(x, x));
    out.values = std::move(x);
    out.centered = center;
    return out;
}

/// Mean per-entry variance, used for the initial noise precision.
inline double average_variance(const DataMatrix& x) {
    const double n = static_cast<double>(x.n());
    double ss = 0.0;
    const auto mean = column_means(x.values);
    for (std::size_t j = 0; j < x.d(); ++j) ss += x.scatter(j, j) - n * mean[j] * mean[j];
    return ss / (n * static_cast<double>(x.d()));
}

struct FitConfig {
    double tol = 1e-5;
    std::size_t max_iter = 10000;
    double delta = 1e-4;
    std::size_t warmup = 100;
    std::uint64_t seed = 0;
    /// Gaussian mixtures only; non-positive means 1e-2 / k_init.
    double gmm_delta = -1.0;
    double sigma2 = 1.0;
};

struct PruneEvent {
    std::size_t iteration = 0;
    std::size_t k_before = 0;
    std::size_t k_after = 0;
    std::vector<double> dropped_eigenvalues;
    double objective_before = 0.0;
    double objective_after = 0.0;
    bool accepted = true;
};

struct FitReport {
    std::string method;
    std::string model;
    std::uint64_t seed = 0;
    std::size_t k_init = 0;
    std::size_t selected_k = 0;
    double final_objective = 0.0;
    std::vector<double> objective_trajectory;
    std::vector<std::size_t> k_trajectory;
    std::vector<PruneEvent> prune_events;
    std::size_t iterations = 0;
    std::size_t warmup_iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;
};

/// Stops when two consecutive relative objective changes are below tol and the latest
/// increment is no larger than the one before it.
class ConvergenceTracker {
public:
    explicit ConvergenceTracker(double tol) : tol_(tol) {}

    bool push(double objective) {
        bool done = false;
        if (has_prev_) {
            const double delta = objective - prev_;
            const double rel = std::abs(delta) / std::max(std::abs(prev_), 1e-300);
            done = rel < tol_ && prev_rel_ < tol_ && std::abs(delta) <= std::abs(prev_delta_);
            prev_rel_ = rel;
            prev_delta_ = delta;
        }
        prev_ = objective;
        has_prev_ = true;
        return done;
    }

    void reset() {
        has_prev_ = false;
        prev_rel_ = std::numeric_limits<double>::infinity();
        prev_delta_ = std::numeric_limits<double>::infinity();
    }

private:
    double tol_;
    double prev_ = 0.0;
    bool has_prev_ = false;
    double prev_rel_ = std::numeric_limits<double>::infinity();
    double prev_delta_ = std::numeric_limits<double>::infinity();
};

}  // namespace lvmselect
