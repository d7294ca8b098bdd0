#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>

#include "lvmselect/harness.hpp"
#include "lvmselect/vb.hpp"

using namespace lvmselect;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

double gamma_entropy(double a, double b) {
    return a - std::log(b) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
}

double gamma_expect_log_prior(double a0, double b0, double a, double b) {
    const double elog = boost::math::digamma(a) - std::log(b);
    return a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * elog - b0 * a / b;
}

/// Lower bound assembled row by row from explicit per-sample latent moments.
double oracle_bound(const DataMatrix& data, const VbState& s, const VbHyper& h) {
    const Eigen::MatrixXd x = to_eigen(data.values), m = to_eigen(s.w_mean), sw = to_eigen(s.w_cov);
    const Eigen::MatrixXd sz = to_eigen(s.q_z.sigma), proj = to_eigen(s.q_z.projection);
    const long N = x.rows(), D = x.cols(), K = m.cols();
    const double lam = s.q_lambda.shape / s.q_lambda.rate;
    const double elog_lam = boost::math::digamma(s.q_lambda.shape) - std::log(s.q_lambda.rate);
    const Eigen::MatrixXd eww = m.transpose() * m + double(D) * sw;
    double total = 0.0;
    for (long n = 0; n < N; ++n) {
        const Eigen::VectorXd xn = x.row(n).transpose();
        const Eigen::VectorXd mu = proj.transpose() * xn;
        const Eigen::MatrixXd ezz = mu * mu.transpose() + sz;
        const double sq = xn.squaredNorm() - 2.0 * xn.dot(m * mu) + (eww * ezz).trace();
        total += 0.5 * D * (elog_lam - kLog2Pi) - 0.5 * lam * sq;
        total += -0.5 * K * kLog2Pi - 0.5 * ezz.trace();
        total += 0.5 * K * (1.0 + kLog2Pi) + 0.5 * std::log(sz.determinant());
    }
    for (long k = 0; k < K; ++k) {
        double a = 1.0, elog_a = 0.0;
        if (!s.q_alpha.empty()) {
            a = s.q_alpha[k].shape / s.q_alpha[k].rate;
            elog_a = boost::math::digamma(s.q_alpha[k].shape) - std::log(s.q_alpha[k].rate);
            total += gamma_expect_log_prior(h.a_alpha, h.b_alpha, s.q_alpha[k].shape, s.q_alpha[k].rate);
            total += gamma_entropy(s.q_alpha[k].shape, s.q_alpha[k].rate);
        }
        for (long d = 0; d < D; ++d) {
            const double ew2 = m(d, k) * m(d, k) + sw(k, k);
            total += -0.5 * kLog2Pi + 0.5 * elog_a - 0.5 * a * ew2;
        }
    }
    total += 0.5 * D * (K * (1.0 + kLog2Pi) + std::log(sw.determinant()));
    total += gamma_expect_log_prior(h.a_lambda, h.b_lambda, s.q_lambda.shape, s.q_lambda.rate);
    total += gamma_entropy(s.q_lambda.shape, s.q_lambda.rate);
    return total;
}

DataMatrix small_data(std::uint64_t seed) {
    ExperimentConfig c;
    c.d = 3;
    c.k_true = 2;
    return make_data(generate_synthetic(c, 20, seed));
}

}  // namespace

TEST(GammaFactor, EntropyAndMoments) {
    const GammaFactor g{1.0, 1.0};
    EXPECT_NEAR(g.entropy(), 1.0, 1e-12);
    EXPECT_NEAR(g.log_mean(), -std::numbers::egamma, 1e-12);
    const GammaFactor h{3.0, 2.0};
    EXPECT_NEAR(h.mean(), 1.5, 1e-15);
    EXPECT_NEAR(h.entropy(), gamma_entropy(3.0, 2.0), 1e-12);
}

TEST(VbBound, MatchesRowByRowOracle) {
    const VbHyper h;
    for (VbMode mode : {VbMode::VB1, VbMode::VB2})
        for (std::uint64_t s = 0; s < 3; ++s) {
            const DataMatrix x = small_data(s);
            VbState st = initial_vb(x, 2, s, mode);
            for (int i = 0; i < 4; ++i) {
                st = vb_update_cycle(x, st, mode);
                const double b = vb_lower_bound(x, st, h).total;
                EXPECT_NEAR(b, oracle_bound(x, st, h), 1e-8 * std::max(1.0, std::abs(b)));
            }
        }
}

TEST(VbBound, NonDecreasingOverUpdates) {
    ExperimentConfig c;
    for (VbMode mode : {VbMode::VB1, VbMode::VB2})
        for (std::uint64_t s = 0; s < 5; ++s) {
            const DataMatrix x = make_data(generate_synthetic(c, 200, s));
            FitConfig fc;
            fc.seed = s;
            fc.max_iter = 300;
            const auto rep = fit_vb(x, 12, fc, mode);
            for (std::size_t i = 1; i < rep.objective_trajectory.size(); ++i)
                EXPECT_GE(rep.objective_trajectory[i], rep.objective_trajectory[i - 1] -
                                                          1e-9 * std::abs(rep.objective_trajectory[i - 1]))
                    << "seed " << s << " step " << i;
        }
}

TEST(VbUpdate, LambdaFactorIsCoordinateOptimal) {
    const DataMatrix x = small_data(9);
    const VbState st = vb_update_cycle(x, initial_vb(x, 2, 9, VbMode::VB1), VbMode::VB1);
    const double base = vb_lower_bound(x, st).total;
    for (double f : {0.9, 1.1}) {
        VbState a = st;
        a.q_lambda.rate *= f;
        EXPECT_LT(vb_lower_bound(x, a).total, base);
        VbState b = st;
        b.q_lambda.shape *= f;
        EXPECT_LT(vb_lower_bound(x, b).total, base);
    }
}

TEST(VbUpdate, ZeroDataSendsBasisToZero) {
    const DataMatrix x = make_data(Matrix(20, 3), false);
    VbState st = initial_vb(small_data(1), 2, 1, VbMode::VB1);
    for (int i = 0; i < 3; ++i) {
        st = vb_update_cycle(x, st, VbMode::VB1);
        EXPECT_EQ(max_abs(st.w_mean), 0.0);
        EXPECT_NEAR(st.q_lambda.rate, VbHyper{}.b_lambda + 1.5 * frobenius_dot(st.w_cov, st.q_z.second_moment),
                    1e-12);
    }
}

TEST(VbUpdate, CovarianceUsesIncomingPrecisions) {
    const DataMatrix x = small_data(3);
    VbState st = initial_vb(x, 2, 3, VbMode::VB2);
    for (int i = 0; i < 5; ++i) {
        const VbState next = vb_update_cycle(x, st, VbMode::VB2);
        std::vector<double> alpha;
        for (const auto& a : st.q_alpha) alpha.push_back(a.mean());
        const Matrix prec = Matrix::diagonal(alpha) + st.q_lambda.mean() * next.q_z.second_moment;
        EXPECT_LE(max_abs(next.w_cov * prec - Matrix::identity(2)), 1e-10);
        st = next;
    }
}

TEST(FitVb, Deterministic) {
    ExperimentConfig c;
    const DataMatrix x = make_data(generate_synthetic(c, 100, 5));
    FitConfig fc;
    fc.seed = 5;
    fc.max_iter = 200;
    const auto a = fit_vb(x, 10, fc, VbMode::VB2), b = fit_vb(x, 10, fc, VbMode::VB2);
    EXPECT_EQ(a.objective_trajectory, b.objective_trajectory);
}

TEST(FitVb, WhiteNoiseFavorsOneDimension) {
    Rng rng(4);
    const DataMatrix x = make_data(Matrix(500, 5, draw_gaussian(rng, 2500)));
    FitConfig fc;
    fc.seed = 4;
    double best = -1e300;
    std::size_t argmax = 0;
    for (std::size_t k = 1; k <= 4; ++k) {
        const double v = fit_vb(x, k, fc, VbMode::VB1).final_objective;
        if (v > best) best = v, argmax = k;
    }
    EXPECT_EQ(argmax, 1u);
}

TEST(FitVb, RelevanceDeterminationSwitchesOffUnusedColumns) {
    ExperimentConfig c;
    const DataMatrix x = make_data(generate_synthetic(c, 500, 2));
    FitConfig fc;
    fc.seed = 2;
    VbState st;
    fit_vb(x, 20, fc, VbMode::VB2, &st);
    std::size_t large = 0;
    for (const auto& a : st.q_alpha) large += a.mean() > 100.0;
    EXPECT_EQ(large, 10u);
}
