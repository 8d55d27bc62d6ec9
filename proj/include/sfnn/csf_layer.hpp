#pragma once

#include <vector>

#include "sfnn/patches.hpp"
#include "sfnn/sf_layer.hpp"

namespace sfnn {

/// Per-patch factorization contexts from a convolutional forward pass, in
/// row-major patch order, plus the geometry that produced them.
struct CsfContext {
    PatchGeometry geom;
    std::vector<SfContext> patches; // geom.patch_count() entries
};

struct CsfGrads {
    Tensor grad_dict;   // m x K, m = h_Q * w_Q * c
    Tensor grad_input;  // h x w x c
};

/// Sparse-codes every overlapping patch of the input against the dictionary.
/// Output is (h - h_Q + 1) x (w - w_Q + 1) x K: position (r, s, :) holds the
/// code of the patch anchored at (r, s).
Tensor csf_forward(const Tensor& a_prev, const Dictionary& dict, const PatchGeometry& geom,
                   const ElasticNetParams& params, CsfContext& ctx);

/// Backward through every patch: dictionary gradients are summed over
/// patches; input gradients are overlap-added onto each patch's source
/// pixels. grad_a has the forward output's shape.
CsfGrads csf_backward(const CsfContext& ctx, const Dictionary& dict, const Tensor& grad_a);

/// Summed reconstruction objective over all patch codes.
double csf_unsup_loss(const CsfContext& ctx, const Dictionary& dict);

/// Gradients of csf_unsup_loss: per-patch terms summed over patches for the
/// dictionary, overlap-added for the input.
CsfGrads csf_unsup_grads(const CsfContext& ctx, const Dictionary& dict);

} // namespace sfnn
