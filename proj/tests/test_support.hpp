#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sfnn/rng.hpp"
#include "sfnn/tensor.hpp"

namespace testsup {

/// Random dictionary with unit-norm columns (Gaussian entries, normalized).
inline sfnn::Tensor random_dictionary(std::size_t m, std::size_t K, sfnn::Rng& rng) {
    sfnn::Tensor P({m, K});
    sfnn::GaussianDraw gauss;
    for (std::size_t i = 0; i < m * K; ++i) P[i] = gauss(rng);
    for (std::size_t j = 0; j < K; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += P(i, j) * P(i, j);
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t i = 0; i < m; ++i) P(i, j) *= inv;
    }
    return P;
}

inline sfnn::Tensor random_vector(std::size_t n, sfnn::Rng& rng, double scale = 1.0) {
    sfnn::Tensor x({n});
    sfnn::GaussianDraw gauss;
    for (std::size_t i = 0; i < n; ++i) x[i] = scale * gauss(rng);
    return x;
}

/// Triple-checked matrix-vector product written the naive way, as a foil for
/// the library kernels.
inline std::vector<double> naive_matvec(const sfnn::Tensor& A, const std::vector<double>& x) {
    std::vector<double> y(A.rows(), 0.0);
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) y[i] += A(i, j) * x[j];
    return y;
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting. Slow and
/// simple on purpose; used to cross-check Cholesky solves.
inline sfnn::Tensor gauss_jordan_inverse(const sfnn::Tensor& A) {
    const std::size_t n = A.rows();
    std::vector<std::vector<double>> aug(n, std::vector<double>(2 * n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aug[i][j] = A(i, j);
        aug[i][n + i] = 1.0;
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
        std::swap(aug[col], aug[pivot]);
        const double d = aug[col][col];
        for (std::size_t j = 0; j < 2 * n; ++j) aug[col][j] /= d;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = aug[r][col];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < 2 * n; ++j) aug[r][j] -= f * aug[col][j];
        }
    }
    sfnn::Tensor inv({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) inv(i, j) = aug[i][n + j];
    return inv;
}

inline double max_abs_diff(const sfnn::Tensor& a, const sfnn::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace testsup
