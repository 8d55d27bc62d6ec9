#pragma once

#include <cstddef>
#include <vector>

#include "sfnn/tensor.hpp"

namespace sfnn {

/// Weights and stopping controls for the sparse coding problem
///   min_a 1/2 ||x - P a||^2 + lambda1 ||a||_1 + lambda2/2 ||a||^2.
struct ElasticNetParams {
    double lambda1 = 0.15;
    double lambda2 = 0.01;       // must stay positive
    std::size_t max_active = 0;  // cap on support size; 0 means no cap (K)
    double tolerance = 1e-7;     // KKT stopping threshold
    std::size_t max_iterations = 0; // 0 picks a size-based default

    std::size_t active_cap(std::size_t K) const {
        return (max_active == 0 || max_active > K) ? K : max_active;
    }
};

/// Solution of the elastic net: the code, its nonzero support (ascending) and
/// the reconstruction residual x - P alpha.
struct SparseCode {
    Tensor alpha;                     // length K
    std::vector<std::size_t> support; // ascending indices of nonzeros
    Tensor residual;                  // length m
};

/// Raised when the active-set iteration cap is exceeded; carries the best
/// iterate reached and its KKT residual.
struct SolverError : NumericalError {
    SolverError(const std::string& msg, SparseCode best, double kkt_value)
        : NumericalError(msg), best_iterate(std::move(best)), kkt(kkt_value) {}
    SparseCode best_iterate;
    double kkt;
};

/// Solves the elastic net with a LARS-style active-set homotopy (the lasso
/// path of the augmented system [P; sqrt(lambda2) I] followed down to
/// lambda1). Deterministic; ties broken toward the lowest index.
///
/// Preconditions: P columns have l2 norm <= 1, x finite. When max_active
/// caps the path early the returned iterate is the exact solution at the
/// penalty level where the cap was reached, so KKT against lambda1 only
/// holds for an unbinding cap.
SparseCode solve(const Tensor& x, const Tensor& P, const ElasticNetParams& params);

/// Same, with a caller-provided transpose Pt (K x m, one atom per row).
/// Avoids re-deriving the transpose in per-sample or per-patch loops.
SparseCode solve(const Tensor& x, const Tensor& P, const Tensor& Pt, const ElasticNetParams& params);

/// Reference solver: cyclic coordinate descent with exact single-coordinate
/// minimization, iterated until the KKT residual falls below 1e-10. A fully
/// independent code path from solve(), kept for testing.
SparseCode oracle_solve(const Tensor& x, const Tensor& P, const ElasticNetParams& params);

/// Max violation of the elastic-net optimality conditions:
///   on the support   |P_j^T (x - P a) - lambda1 sign(a_j) - lambda2 a_j|
///   off the support  max(0, |P_j^T (x - P a)| - lambda1)
double kkt_residual(const SparseCode& code, const Tensor& x, const Tensor& P,
                    const ElasticNetParams& params);

/// Objective value at the given code.
double objective(const Tensor& alpha, const Tensor& x, const Tensor& P,
                 const ElasticNetParams& params);

} // namespace sfnn
