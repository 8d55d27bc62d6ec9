#include "sfnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sfnn {

std::string shape_to_string(const Shape& dims) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << 'x';
        os << dims[i];
    }
    os << ')';
    return os.str();
}

namespace {

std::size_t shape_product(const Shape& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw DimensionError("tensor: zero extent in shape " + shape_to_string(dims));
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(Shape dims) : dims_(std::move(dims)), data_(shape_product(dims_), 0.0) {}

Tensor::Tensor(Shape dims, std::vector<double> values) : dims_(std::move(dims)), data_(std::move(values)) {
    if (shape_product(dims_) != data_.size()) {
        throw DimensionError("tensor: shape " + shape_to_string(dims_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    dims_ = {r, c};
    data_.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("tensor: ragged initializer rows");
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor I({n, n});
    for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
    return I;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::reshape(Shape dims) {
    if (shape_product(dims) != data_.size()) {
        throw DimensionError("reshape: " + shape_to_string(dims_) + " -> " + shape_to_string(dims) +
                             " changes element count");
    }
    dims_ = std::move(dims);
}

Tensor Tensor::reshaped(Shape dims) const {
    Tensor t = *this;
    t.reshape(std::move(dims));
    return t;
}

Tensor matvec(const Tensor& A, const Tensor& x) {
    if (A.rank() != 2 || x.size() != A.cols()) {
        throw DimensionError("matvec: dimension mismatch, A is " + shape_to_string(A.dims()) +
                             ", x is " + shape_to_string(x.dims()));
    }
    const std::size_t m = A.rows(), n = A.cols();
    Tensor y({m});
    const double* a = A.data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = a + i * n;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

Tensor matvec_t(const Tensor& A, const Tensor& x) {
    if (A.rank() != 2 || x.size() != A.rows()) {
        throw DimensionError("matvec_t: dimension mismatch, A is " + shape_to_string(A.dims()) +
                             ", x is " + shape_to_string(x.dims()));
    }
    const std::size_t m = A.rows(), n = A.cols();
    Tensor y({n});
    const double* a = A.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = a + i * n;
        for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
    }
    return y;
}

Tensor matmul(const Tensor& A, const Tensor& B) {
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
        throw DimensionError("matmul: dimension mismatch, A is " + shape_to_string(A.dims()) +
                             ", B is " + shape_to_string(B.dims()));
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A(i, p);
            if (a == 0.0) continue;
            const double* brow = B.data() + p * n;
            double* crow = C.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

Tensor transpose(const Tensor& A) {
    if (A.rank() != 2) throw DimensionError("transpose: expected matrix, got " + shape_to_string(A.dims()));
    Tensor T({A.cols(), A.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
    return T;
}

double dot(const Tensor& x, const Tensor& y) {
    if (x.size() != y.size()) {
        throw DimensionError("dot: size mismatch, " + shape_to_string(x.dims()) + " vs " +
                             shape_to_string(y.dims()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

double norm_inf(const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s = std::max(s, std::abs(x[i]));
    return s;
}

double norm1(const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i]);
    return s;
}

void axpy(double a, const Tensor& x, Tensor& y) {
    if (x.size() != y.size()) {
        throw DimensionError("axpy: size mismatch, " + shape_to_string(x.dims()) + " vs " +
                             shape_to_string(y.dims()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(double a, Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= a;
}

bool all_finite(const Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

void check_finite(const Tensor& x, const std::string& what) {
    if (!all_finite(x)) throw NumericalError(what + ": non-finite value");
}

SpdFactor chol_factor(const Tensor& A) {
    if (A.rank() != 2 || A.rows() != A.cols()) {
        throw DimensionError("chol_factor: expected square matrix, got " + shape_to_string(A.dims()));
    }
    const std::size_t n = A.rows();
    SpdFactor F;
    F.size = n;
    F.factor = Tensor({n, n});
    Tensor& L = F.factor;
    for (std::size_t j = 0; j < n; ++j) {
        double d = A(j, j);
        for (std::size_t p = 0; p < j; ++p) d -= L(j, p) * L(j, p);
        if (!(d > 0.0)) {
            throw NumericalError("chol_factor: non-positive pivot " + std::to_string(d) + " at index " +
                                 std::to_string(j) + " (matrix numerically indefinite)");
        }
        L(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= L(i, p) * L(j, p);
            L(i, j) = s / L(j, j);
        }
    }
    return F;
}

Tensor chol_solve(const SpdFactor& F, const Tensor& b) {
    const std::size_t n = F.size;
    if (b.size() != n) {
        throw DimensionError("chol_solve: factor is " + std::to_string(n) + "x" + std::to_string(n) +
                             ", b is " + shape_to_string(b.dims()));
    }
    const Tensor& L = F.factor;
    Tensor y({n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t p = 0; p < i; ++p) s -= L(i, p) * y[p];
        y[i] = s / L(i, i);
    }
    Tensor x({n});
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t p = ii + 1; p < n; ++p) s -= L(p, ii) * x[p];
        x[ii] = s / L(ii, ii);
    }
    return x;
}

} // namespace sfnn
