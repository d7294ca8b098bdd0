#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "lvmselect/errors.hpp"

namespace lvmselect {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        require(data_.size() == rows_ * cols_, "Matrix: entry count does not match shape");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix diagonal(const std::vector<double>& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        require(rows_ == o.rows_ && cols_ == o.cols_, "Matrix +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require(rows_ == o.rows_ && cols_ == o.cols_, "Matrix -=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        require(a.cols_ == b.rows_, "Matrix *: shape mismatch");
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = ai[k];
                if (aik == 0.0) continue;
                const double* bk = b.row(k);
                for (std::size_t j = 0; j < b.cols_; ++j) ci[j] += aik * bk[j];
            }
        }
        return c;
    }

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// aᵀ·b without forming the transpose.
inline Matrix transpose_times(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "transpose_times: shape mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t n = 0; n < a.rows(); ++n) {
        const double* an = a.row(n);
        const double* bn = b.row(n);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ai = an[i];
            if (ai == 0.0) continue;
            double* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += ai * bn[j];
        }
    }
    return c;
}

inline double trace(const Matrix& a) {
    require(a.rows() == a.cols(), "trace: matrix not square");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

/// tr(aᵀb), the Frobenius inner product.
inline double frobenius_dot(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "frobenius_dot: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_dot(a, a)); }

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

inline bool all_finite(const Matrix& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

inline Matrix symmetrize(const Matrix& a) {
    require(a.rows() == a.cols(), "symmetrize: matrix not square");
    Matrix s(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

/// Columns of `a` listed in `keep`, in that order.
inline Matrix select_columns(const Matrix& a, const std::vector<std::size_t>& keep) {
    Matrix s(a.rows(), keep.size());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < keep.size(); ++j) s(i, j) = a(i, keep[j]);
    return s;
}

inline Matrix select_block(const Matrix& a, const std::vector<std::size_t>& keep) {
    Matrix s(keep.size(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (std::size_t j = 0; j < keep.size(); ++j) s(i, j) = a(keep[i], keep[j]);
    return s;
}

inline void check_symmetric(const Matrix& a, const char* who) {
    require(a.rows() == a.cols(), std::string(who) + ": matrix not square");
    const double scale = std::max(1.0, max_abs(a));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            require(std::abs(a(i, j) - a(j, i)) <= 1e-9 * scale, std::string(who) + ": matrix not symmetric");
}

struct SymEigResult {
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;              // columns
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
inline SymEigResult sym_eig(const Matrix& input) {
    check_symmetric(input, "sym_eig");
    const std::size_t n = input.rows();
    Matrix a = symmetrize(input);
    Matrix v = Matrix::identity(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };
    const double total = std::max(frobenius_norm(a), 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        if (off_norm() <= 1e-12 * total) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEigResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t src = order[c];
        out.eigenvalues[c] = a(src, src);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(v(k, src)) > std::abs(v(arg, src)) + 1e-14) arg = k;
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, c) = sign * v(k, src);
    }
    return out;
}

inline double smallest_eigenvalue(const Matrix& a) {
    if (a.rows() == 0) return 0.0;
    return sym_eig(a).eigenvalues.back();
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
inline Matrix cholesky(const Matrix& input) {
    check_symmetric(input, "cholesky");
    const std::size_t n = input.rows();
    const Matrix a = symmetrize(input);
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d))
            throw DegenerateMatrix("matrix is not positive definite", smallest_eigenvalue(a));
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

inline double logdet_pd(const Matrix& a) {
    const Matrix l = cholesky(a);
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

inline Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
    const std::size_t n = l.rows();
    require(b.rows() == n, "solve_spd: shape mismatch");
    Matrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
            x(i, c) = s / l(i, i);
        }
    }
    return x;
}

inline Matrix solve_spd(const Matrix& a, const Matrix& b) { return cholesky_solve(cholesky(a), b); }

inline Matrix inverse_spd(const Matrix& a) {
    return symmetrize(cholesky_solve(cholesky(a), Matrix::identity(a.rows())));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// xorshift64* generator. The state is seeded through splitmix64 so that seed 0 is valid.
struct Rng {
    static constexpr const char* algorithm = "xorshift64*";
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0) : state(splitmix64(seed)) {
        if (state == 0) state = 0x9E3779B97F4A7C15ULL;
    }

    std::uint64_t next_u64() {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        return state * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
};

/// Independent stream derived from a run seed.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) { return Rng(splitmix64(seed) ^ splitmix64(stream * 0xD1B54A32D192ED03ULL + 1)); }

/// n standard normal draws by Box–Muller; always consumes 2·ceil(n/2) uniforms.
inline std::vector<double> draw_gaussian(Rng& rng, std::size_t n) {
    std::vector<double> out;
    out.reserve(n + 1);
    while (out.size() < n) {
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        out.push_back(r * std::cos(t));
        out.push_back(r * std::sin(t));
    }
    out.resize(n);
    return out;
}

}  // namespace lvmselect
