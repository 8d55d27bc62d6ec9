#pragma once

#include <cstddef>
#include <string>

#include "sfnn/tensor.hpp"

namespace sfnn {

/// Dense stride-1 patch coverage of an h x w x c image, valid extent only:
/// output spatial size is (h - h_Q + 1) x (w - w_Q + 1).
struct PatchGeometry {
    std::size_t h = 0, w = 0, c = 0;   // image extents
    std::size_t h_Q = 0, w_Q = 0;      // patch extents

    std::size_t out_h() const { return h - h_Q + 1; }
    std::size_t out_w() const { return w - w_Q + 1; }
    std::size_t patch_count() const { return out_h() * out_w(); }
    std::size_t patch_len() const { return h_Q * w_Q * c; }

    void validate() const {
        if (h == 0 || w == 0 || c == 0 || h_Q == 0 || w_Q == 0)
            throw DimensionError("patch geometry: zero extent");
        if (h_Q > h || w_Q > w)
            throw DimensionError("patch geometry: patch " + std::to_string(h_Q) + "x" +
                                 std::to_string(w_Q) + " exceeds image " + std::to_string(h) +
                                 "x" + std::to_string(w));
    }
};

/// Copies patch (r, s) out of the image, vectorized in row, column, channel
/// order (each pixel's channels contiguous).
inline void extract_patch(const Tensor& image, const PatchGeometry& g, std::size_t r,
                          std::size_t s, double* out) {
    const double* src = image.data();
    std::size_t o = 0;
    for (std::size_t dr = 0; dr < g.h_Q; ++dr) {
        const double* row = src + ((r + dr) * g.w + s) * g.c;
        for (std::size_t k = 0; k < g.w_Q * g.c; ++k) out[o++] = row[k];
    }
}

/// Adds a patch-shaped gradient back onto the source pixels of patch (r, s).
inline void scatter_patch_add(Tensor& image, const PatchGeometry& g, std::size_t r,
                              std::size_t s, const double* grad) {
    double* dst = image.data();
    std::size_t o = 0;
    for (std::size_t dr = 0; dr < g.h_Q; ++dr) {
        double* row = dst + ((r + dr) * g.w + s) * g.c;
        for (std::size_t k = 0; k < g.w_Q * g.c; ++k) row[k] += grad[o++];
    }
}

/// All patches as rows of a patch_count x patch_len matrix, row-major patch
/// order (r outer, s inner).
Tensor extract_patches(const Tensor& image, const PatchGeometry& g);

} // namespace sfnn
