#include "sfnn/csf_layer.hpp"

namespace sfnn {

Tensor extract_patches(const Tensor& image, const PatchGeometry& g) {
    g.validate();
    if (image.rank() != 3 || image.dim(0) != g.h || image.dim(1) != g.w || image.dim(2) != g.c) {
        throw DimensionError("extract_patches: image shape " + shape_to_string(image.dims()) +
                             " does not match geometry " + std::to_string(g.h) + "x" +
                             std::to_string(g.w) + "x" + std::to_string(g.c));
    }
    Tensor out({g.patch_count(), g.patch_len()});
    std::size_t p = 0;
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s < g.out_w(); ++s)
            extract_patch(image, g, r, s, out.data() + (p++) * g.patch_len());
    return out;
}

Tensor csf_forward(const Tensor& a_prev, const Dictionary& dict, const PatchGeometry& geom,
                   const ElasticNetParams& params, CsfContext& ctx) {
    geom.validate();
    if (dict.input_dim() != geom.patch_len()) {
        throw DimensionError("csf_forward: dictionary rows " + std::to_string(dict.input_dim()) +
                             " do not match patch length " + std::to_string(geom.patch_len()));
    }
    if (a_prev.rank() != 3 || a_prev.dim(0) != geom.h || a_prev.dim(1) != geom.w ||
        a_prev.dim(2) != geom.c) {
        throw DimensionError("csf_forward: input shape " + shape_to_string(a_prev.dims()) +
                             " does not match geometry");
    }

    const std::size_t K = dict.atoms();
    const Tensor dict_t = transpose(dict.matrix);
    ctx.geom = geom;
    ctx.patches.clear();
    ctx.patches.reserve(geom.patch_count());

    Tensor out({geom.out_h(), geom.out_w(), K});
    Tensor patch({geom.patch_len()});
    for (std::size_t r = 0; r < geom.out_h(); ++r) {
        for (std::size_t s = 0; s < geom.out_w(); ++s) {
            extract_patch(a_prev, geom, r, s, patch.data());
            try {
                ctx.patches.push_back(sf_forward(patch, dict, dict_t, params));
            } catch (const NumericalError& e) {
                throw NumericalError("patch (" + std::to_string(r) + ", " + std::to_string(s) +
                                     "): " + e.what());
            }
            const Tensor& code = ctx.patches.back().code.alpha;
            for (std::size_t k = 0; k < K; ++k) out(r, s, k) = code[k];
        }
    }
    return out;
}

CsfGrads csf_backward(const CsfContext& ctx, const Dictionary& dict, const Tensor& grad_a) {
    const PatchGeometry& g = ctx.geom;
    const std::size_t K = dict.atoms();
    if (grad_a.rank() != 3 || grad_a.dim(0) != g.out_h() || grad_a.dim(1) != g.out_w() ||
        grad_a.dim(2) != K) {
        throw DimensionError("csf_backward: gradient shape " + shape_to_string(grad_a.dims()) +
                             " does not match output");
    }
    if (ctx.patches.size() != g.patch_count())
        throw DimensionError("csf_backward: context does not match geometry");

    CsfGrads out;
    out.grad_dict = Tensor({dict.input_dim(), K});
    out.grad_input = Tensor({g.h, g.w, g.c});

    Tensor grad_patch_code({K});
    std::size_t p = 0;
    for (std::size_t r = 0; r < g.out_h(); ++r) {
        for (std::size_t s = 0; s < g.out_w(); ++s, ++p) {
            for (std::size_t k = 0; k < K; ++k) grad_patch_code[k] = grad_a(r, s, k);
            SfGrads pg = sf_backward(ctx.patches[p], dict, grad_patch_code);
            axpy(1.0, pg.grad_dict, out.grad_dict);
            scatter_patch_add(out.grad_input, g, r, s, pg.grad_input.data());
        }
    }
    return out;
}

double csf_unsup_loss(const CsfContext& ctx, const Dictionary& dict) {
    double total = 0.0;
    for (const SfContext& patch : ctx.patches) total += unsup_loss(patch, dict);
    return total;
}

CsfGrads csf_unsup_grads(const CsfContext& ctx, const Dictionary& dict) {
    const PatchGeometry& g = ctx.geom;
    CsfGrads out;
    out.grad_dict = Tensor({dict.input_dim(), dict.atoms()});
    out.grad_input = Tensor({g.h, g.w, g.c});

    std::size_t p = 0;
    for (std::size_t r = 0; r < g.out_h(); ++r) {
        for (std::size_t s = 0; s < g.out_w(); ++s, ++p) {
            SfGrads pg = unsup_grads(ctx.patches[p], dict);
            axpy(1.0, pg.grad_dict, out.grad_dict);
            scatter_patch_add(out.grad_input, g, r, s, pg.grad_input.data());
        }
    }
    return out;
}

} // namespace sfnn
