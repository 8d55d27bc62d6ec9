#pragma once

#include "sfnn/elastic_net.hpp"
#include "sfnn/rng.hpp"
#include "sfnn/tensor.hpp"

namespace sfnn {

/// Dictionary parameter of a sparse factorization layer: m rows (input
/// dimension) by K columns (atoms). Kept under the constraint that every
/// column has l2 norm at most 1.
struct Dictionary {
    Tensor matrix; // m x K

    Dictionary() = default;
    explicit Dictionary(Tensor m) : matrix(std::move(m)) {}

    std::size_t input_dim() const { return matrix.rows(); }
    std::size_t atoms() const { return matrix.cols(); }
};

/// Gaussian columns scaled to unit norm, drawn from the given stream.
Dictionary random_dictionary(std::size_t m, std::size_t K, Rng& rng);

/// Everything the backward pass needs from a forward pass: the input seen,
/// the code solved for it, and the penalty weights used.
struct SfContext {
    Tensor input;           // a_prev, length m
    SparseCode code;        // alpha (the layer activation), support, residual
    ElasticNetParams params;
};

struct SfGrads {
    Tensor grad_dict;   // m x K
    Tensor grad_input;  // length m
};

/// Forward pass: the activation is the sparse code of the input in the
/// dictionary. The activation itself is ctx.code.alpha.
SfContext sf_forward(const Tensor& a_prev, const Dictionary& dict, const ElasticNetParams& params);

/// Same, with a caller-provided transpose of dict.matrix (K x m) so batched
/// callers can reuse it across many solves.
SfContext sf_forward(const Tensor& a_prev, const Dictionary& dict, const Tensor& dict_t,
                     const ElasticNetParams& params);

/// The auxiliary vector that linearizes the solver's output around its
/// support: zero off the support, and on the support the solution of
///   (P_s^T P_s + lambda2 I) b_s = grad_a_s.
Tensor compute_b(const SfContext& ctx, const Dictionary& dict, const Tensor& grad_a);

/// Gradients of a downstream loss through the forward solve:
///   grad_dict  = -P b alpha^T + (a_prev - P alpha) b^T
///   grad_input = P b
SfGrads sf_backward(const SfContext& ctx, const Dictionary& dict, const Tensor& grad_a);

/// Scales any column with norm > 1 back to norm exactly 1; shorter columns
/// are left untouched.
void renormalize(Dictionary& dict);

/// Reconstruction objective at the solved code:
///   1/2 ||a_prev - P alpha||^2 + lambda1 ||alpha||_1 + lambda2/2 ||alpha||^2.
double unsup_loss(const SfContext& ctx, const Dictionary& dict);

/// Gradients of unsup_loss treating the code as constant (the code is the
/// argmin, so first-order terms through it vanish):
///   grad_dict  = -(a_prev - P alpha) alpha^T
///   grad_input =  a_prev - P alpha
SfGrads unsup_grads(const SfContext& ctx, const Dictionary& dict);

} // namespace sfnn
