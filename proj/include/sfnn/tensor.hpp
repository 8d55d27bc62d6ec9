#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "sfnn/errors.hpp"

namespace sfnn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& dims);

/// Dense multi-dimensional array of doubles in row-major order.
///
/// The carrier type for activations, gradients and parameters. A rank-2
/// tensor with dims {rows, cols} is the matrix convention used throughout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape dims);
    Tensor(Shape dims, std::vector<double> values);
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor identity(std::size_t n);

    const Shape& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return dims_[i]; }

    /// Matrix helpers, valid for rank-2 tensors.
    std::size_t rows() const { return dims_[0]; }
    std::size_t cols() const { return dims_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

    double& operator()(std::size_t r, std::size_t c, std::size_t k) {
        return data_[(r * dims_[1] + c) * dims_[2] + k];
    }
    double operator()(std::size_t r, std::size_t c, std::size_t k) const {
        return data_[(r * dims_[1] + c) * dims_[2] + k];
    }

    double& operator()(std::size_t r, std::size_t c, std::size_t k, std::size_t l) {
        return data_[((r * dims_[1] + c) * dims_[2] + k) * dims_[3] + l];
    }
    double operator()(std::size_t r, std::size_t c, std::size_t k, std::size_t l) const {
        return data_[((r * dims_[1] + c) * dims_[2] + k) * dims_[3] + l];
    }

    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    void fill(double value);
    void reshape(Shape dims);
    Tensor reshaped(Shape dims) const;

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

private:
    Shape dims_;
    std::vector<double> data_;
};

/// y = A * x for an m-by-n matrix and length-n vector.
Tensor matvec(const Tensor& A, const Tensor& x);

/// y = A^T * x for an m-by-n matrix and length-m vector.
Tensor matvec_t(const Tensor& A, const Tensor& x);

/// C = A * B.
Tensor matmul(const Tensor& A, const Tensor& B);

/// A^T as a fresh tensor.
Tensor transpose(const Tensor& A);

double dot(const Tensor& x, const Tensor& y);
double norm2(const Tensor& x);
double norm_inf(const Tensor& x);
double norm1(const Tensor& x);

/// y += a * x, elementwise over equal-size tensors.
void axpy(double a, const Tensor& x, Tensor& y);

/// Elementwise scale in place.
void scale(double a, Tensor& x);

bool all_finite(const Tensor& x);

/// Throws NumericalError naming `what` if the tensor holds NaN or Inf.
void check_finite(const Tensor& x, const std::string& what);

/// Cholesky factor of a symmetric positive-definite matrix: L with L L^T = A.
struct SpdFactor {
    std::size_t size = 0;
    Tensor factor; // lower triangular, n x n
};

/// Factors a symmetric positive-definite matrix. Throws NumericalError on a
/// non-positive pivot (numerical indefiniteness).
SpdFactor chol_factor(const Tensor& A);

/// Solves A x = b given the factor of A.
Tensor chol_solve(const SpdFactor& F, const Tensor& b);

} // namespace sfnn
