#include <gtest/gtest.h>

#include <cmath>

#include "lvmselect/numerics.hpp"

using namespace lvmselect;

namespace {

Matrix random_symmetric(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix a(n, n, draw_gaussian(rng, n * n));
    return symmetrize(a);
}

Matrix random_spd(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix b(n, n, draw_gaussian(rng, n * n));
    return symmetrize(transpose_times(b, b) + Matrix::identity(n) * 0.5);
}

Matrix reconstruct(const SymEigResult& e) {
    return e.eigenvectors * Matrix::diagonal(e.eigenvalues) * e.eigenvectors.transpose();
}

}  // namespace

TEST(SymEig, IdentityHasUnitEigenvalues) {
    const auto e = sym_eig(Matrix::identity(3));
    for (double v : e.eigenvalues) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SymEig, DiagonalIsSortedAndAxisAligned) {
    const auto e = sym_eig(Matrix::diagonal({1.0, 3.0}));
    EXPECT_DOUBLE_EQ(e.eigenvalues[0], 3.0);
    EXPECT_DOUBLE_EQ(e.eigenvalues[1], 1.0);
    EXPECT_DOUBLE_EQ(e.eigenvectors(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(e.eigenvectors(0, 1), 1.0);
}

TEST(SymEig, RandomMatricesReconstructAndStayOrthonormal) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix a = random_symmetric(5, s);
        const auto e = sym_eig(a);
        EXPECT_LE(max_abs(reconstruct(e) - a), 1e-10 * std::max(1.0, max_abs(a)));
        EXPECT_LE(max_abs(transpose_times(e.eigenvectors, e.eigenvectors) - Matrix::identity(5)), 1e-10);
        double sum = 0.0;
        for (double v : e.eigenvalues) sum += v;
        EXPECT_NEAR(sum, trace(a), 1e-9 * std::max(1.0, std::abs(trace(a))));
        for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    }
}

TEST(SymEig, LargestMagnitudeEntryOfEachVectorIsPositive) {
    const auto e = sym_eig(random_symmetric(6, 42));
    for (std::size_t c = 0; c < 6; ++c) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < 6; ++k)
            if (std::abs(e.eigenvectors(k, c)) > std::abs(e.eigenvectors(arg, c))) arg = k;
        EXPECT_GT(e.eigenvectors(arg, c), 0.0);
    }
}

TEST(SymEig, RejectsNonSquareAndAsymmetricInput) {
    EXPECT_THROW(sym_eig(Matrix(2, 3)), ContractViolation);
    Matrix a = Matrix::identity(2);
    a(0, 1) = 0.5;
    EXPECT_THROW(sym_eig(a), ContractViolation);
}

TEST(SymEig, RepeatedRunsAreBitIdentical) {
    const Matrix a = random_symmetric(7, 3);
    const auto e1 = sym_eig(a), e2 = sym_eig(a);
    EXPECT_EQ(e1.eigenvalues, e2.eigenvalues);
    EXPECT_EQ(e1.eigenvectors, e2.eigenvectors);
}

TEST(LogdetPd, AnalyticCases) {
    EXPECT_DOUBLE_EQ(logdet_pd(Matrix::identity(4)), 0.0);
    EXPECT_NEAR(logdet_pd(Matrix::diagonal({std::exp(1.0), std::exp(1.0)})), 2.0, 1e-14);
}

TEST(LogdetPd, MatchesEigenvaluesOfRandomSpd) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix a = random_spd(4, s);
        double oracle = 0.0;
        for (double v : sym_eig(a).eigenvalues) oracle += std::log(v);
        EXPECT_NEAR(logdet_pd(a), oracle, 1e-9);
        EXPECT_NEAR(logdet_pd(a) + logdet_pd(inverse_spd(a)), 0.0, 1e-8);
    }
}

TEST(LogdetPd, NonPositiveDefiniteReportsSmallestEigenvalue) {
    try {
        logdet_pd(Matrix::diagonal({1.0, -2.0}));
        FAIL() << "expected DegenerateMatrix";
    } catch (const DegenerateMatrix& e) {
        EXPECT_NEAR(e.smallest_eigenvalue, -2.0, 1e-12);
    }
}

TEST(SolveSpd, KnownSystems) {
    const Matrix b(3, 1, std::vector<double>{1.0, -2.0, 3.0});
    EXPECT_EQ(solve_spd(Matrix::identity(3), b), b);
    const Matrix x = solve_spd(Matrix::diagonal({2.0, 4.0}), Matrix(2, 1, std::vector<double>{2.0, 4.0}));
    EXPECT_NEAR(x(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(x(1, 0), 1.0, 1e-15);
}

TEST(SolveSpd, ResidualIsSmall) {
    Rng rng(9);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix a = random_spd(6, s + 100);
        const Matrix b(6, 2, draw_gaussian(rng, 12));
        const Matrix x = solve_spd(a, b);
        EXPECT_LE(max_abs(a * x - b), 1e-8 * max_abs(b));
    }
}

TEST(Rng, SameSeedSameStream) {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(Rng(1).next_u64(), Rng(2).next_u64());
}

TEST(DrawGaussian, EmptyAndDeterministic) {
    Rng a(5), b(5);
    EXPECT_TRUE(draw_gaussian(a, 0).empty());
    EXPECT_EQ(draw_gaussian(a, 10), draw_gaussian(b, 10));
}

TEST(DrawGaussian, OddCountsConsumeWholePairs) {
    Rng a(5), b(5);
    draw_gaussian(a, 3);
    draw_gaussian(b, 4);
    EXPECT_EQ(a.state, b.state);
}

TEST(DrawGaussian, LawOfLargeNumbers) {
    Rng rng(2024);
    const auto v = draw_gaussian(rng, 100000);
    double mean = 0.0, sq = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    for (double x : v) sq += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(sq / v.size(), 1.0, 0.03);
}
