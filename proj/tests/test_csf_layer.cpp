#include <cmath>

#include "doctest.h"
#include "sfnn/csf_layer.hpp"
#include "sfnn/gradcheck.hpp"
#include "test_support.hpp"

using namespace sfnn;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
    Tensor img({h, w, c});
    GaussianDraw gauss;
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = gauss(rng);
    return img;
}

} // namespace

TEST_CASE("1x1 patches enumerate the pixels") {
    Rng rng(400);
    Tensor img = random_image(3, 4, 1, rng);
    PatchGeometry g{3, 4, 1, 1, 1};
    Tensor patches = extract_patches(img, g);
    REQUIRE(patches.dims() == Shape{12, 1});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t s = 0; s < 4; ++s) CHECK(patches(r * 4 + s, 0) == img(r, s, 0));
}

TEST_CASE("the first 2x2 patch of a row-major ramp reads 1 2 4 5") {
    Tensor img({3, 3, 1});
    for (std::size_t i = 0; i < 9; ++i) img[i] = double(i + 1);
    PatchGeometry g{3, 3, 1, 2, 2};
    Tensor patches = extract_patches(img, g);
    REQUIRE(patches.dims() == Shape{4, 4});
    CHECK(patches(0, 0) == 1.0);
    CHECK(patches(0, 1) == 2.0);
    CHECK(patches(0, 2) == 4.0);
    CHECK(patches(0, 3) == 5.0);
}

TEST_CASE("patch rows reproduce every window of the image") {
    Rng rng(410);
    Tensor img = random_image(6, 5, 2, rng);
    PatchGeometry g{6, 5, 2, 3, 3};
    Tensor patches = extract_patches(img, g);
    REQUIRE(patches.dims() == Shape{g.patch_count(), g.patch_len()});
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            const std::size_t p = r * g.out_w() + s;
            std::size_t t = 0;
            for (std::size_t dr = 0; dr < 3; ++dr)
                for (std::size_t ds = 0; ds < 3; ++ds)
                    for (std::size_t ch = 0; ch < 2; ++ch, ++t)
                        CHECK(patches(p, t) == img(r + dr, s + ds, ch));
        }
}

TEST_CASE("forward emits one code per window position") {
    Rng rng(420);
    Tensor img = random_image(28, 28, 1, rng);
    Dictionary dict = random_dictionary(25, 20, rng);
    PatchGeometry g{28, 28, 1, 5, 5};
    ElasticNetParams en;
    en.lambda1 = 0.5;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(img, dict, g, en, ctx);
    CHECK(out.dims() == Shape{24, 24, 20});
    CHECK(ctx.patches.size() == 576);
}

TEST_CASE("a zero image codes to zero everywhere") {
    Rng rng(430);
    Dictionary dict = random_dictionary(9, 8, rng);
    PatchGeometry g{6, 6, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.1;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(Tensor({6, 6, 1}), dict, g, en, ctx);
    CHECK(norm_inf(out) == 0.0);
}

TEST_CASE("each output pixel matches a standalone solve of its window") {
    Rng rng(440);
    Tensor img = random_image(6, 6, 1, rng);
    Dictionary dict = random_dictionary(9, 8, rng);
    PatchGeometry g{6, 6, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.3;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(img, dict, g, en, ctx);
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            Tensor window({g.patch_len()});
            extract_patch(img, g, r, s, window.data());
            SfContext ref = sf_forward(window, dict, en);
            for (std::size_t k = 0; k < 8; ++k) CHECK(out(r, s, k) == ref.code.alpha[k]);
        }
}

TEST_CASE("coding commutes with image translation on the shared interior") {
    Rng rng(450);
    Tensor img = random_image(7, 7, 1, rng);
    // Shift the image one column right; codes at (r, s+1) must equal the
    // originals at (r, s) wherever both windows see the same pixels.
    Tensor shifted({7, 7, 1});
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t s = 0; s + 1 < 7; ++s) shifted(r, s + 1, 0) = img(r, s, 0);
    Dictionary dict = random_dictionary(9, 10, rng);
    PatchGeometry g{7, 7, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.3;
    en.lambda2 = 0.01;
    CsfContext ca, cb;
    Tensor out_a = csf_forward(img, dict, g, en, ca);
    Tensor out_b = csf_forward(shifted, dict, g, en, cb);
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s + 1 < g.out_w(); ++s)
            for (std::size_t k = 0; k < 10; ++k) CHECK(out_b(r, s + 1, k) == out_a(r, s, k));
}

TEST_CASE("backward is zero for a zero incoming gradient") {
    Rng rng(460);
    Tensor img = random_image(6, 6, 1, rng);
    Dictionary dict = random_dictionary(9, 8, rng);
    PatchGeometry g{6, 6, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.3;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(img, dict, g, en, ctx);
    CsfGrads grads = csf_backward(ctx, dict, Tensor(out.dims()));
    CHECK(norm_inf(grads.grad_dict) == 0.0);
    CHECK(norm_inf(grads.grad_input) == 0.0);
}

TEST_CASE("backward reduces to the flat layer under 1x1 patches") {
    Rng rng(470);
    Tensor img = random_image(4, 3, 2, rng);
    Dictionary dict = random_dictionary(2, 6, rng);
    PatchGeometry g{4, 3, 2, 1, 1};
    ElasticNetParams en;
    en.lambda1 = 0.2;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(img, dict, g, en, ctx);
    Tensor grad_out(out.dims());
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] = uniform(rng, -1.0, 1.0);
    CsfGrads grads = csf_backward(ctx, dict, grad_out);

    Tensor want_dict({2, 6});
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t s = 0; s < 3; ++s) {
            Tensor pixel = Tensor::vector({img(r, s, 0), img(r, s, 1)});
            SfContext ref = sf_forward(pixel, dict, en);
            Tensor gslice({6});
            for (std::size_t k = 0; k < 6; ++k) gslice[k] = grad_out(r, s, k);
            SfGrads rg = sf_backward(ref, dict, gslice);
            axpy(1.0, rg.grad_dict, want_dict);
            // Non-overlapping windows: the input gradient lands verbatim.
            CHECK(grads.grad_input(r, s, 0) == doctest::Approx(rg.grad_input[0]).epsilon(1e-12));
            CHECK(grads.grad_input(r, s, 1) == doctest::Approx(rg.grad_input[1]).epsilon(1e-12));
        }
    CHECK(testsup::max_abs_diff(grads.grad_dict, want_dict) < 1e-12);
}

TEST_CASE("input gradient is the overlap-added sum of window gradients") {
    Rng rng(480);
    Tensor img = random_image(5, 5, 1, rng);
    Dictionary dict = random_dictionary(9, 8, rng);
    PatchGeometry g{5, 5, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.3;
    en.lambda2 = 0.01;
    CsfContext ctx;
    Tensor out = csf_forward(img, dict, g, en, ctx);
    Tensor grad_out(out.dims());
    for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] = uniform(rng, -1.0, 1.0);
    CsfGrads grads = csf_backward(ctx, dict, grad_out);

    Tensor want({5, 5, 1});
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            Tensor window({g.patch_len()});
            extract_patch(img, g, r, s, window.data());
            Tensor gslice({8});
            for (std::size_t k = 0; k < 8; ++k) gslice[k] = grad_out(r, s, k);
            SfGrads rg = sf_backward(sf_forward(window, dict, en), dict, gslice);
            scatter_patch_add(want, g, r, s, rg.grad_input.data());
        }
    CHECK(testsup::max_abs_diff(grads.grad_input, want) < 1e-12);
}

TEST_CASE("backward gradients agree with finite differences") {
    GradCheckReport report = check_csf_gradients(7, 5);
    CHECK(report.instances == 5);
    CHECK(report.max_rel_err < report.tolerance);
}

TEST_CASE("reconstruction loss sums the per-window objectives") {
    Rng rng(490);
    Tensor img = random_image(5, 5, 1, rng);
    Dictionary dict = random_dictionary(9, 8, rng);
    PatchGeometry g{5, 5, 1, 3, 3};
    ElasticNetParams en;
    en.lambda1 = 0.3;
    en.lambda2 = 0.01;
    CsfContext ctx;
    csf_forward(img, dict, g, en, ctx);
    double want = 0.0;
    for (std::size_t r = 0; r < g.out_h(); ++r)
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            Tensor window({g.patch_len()});
            extract_patch(img, g, r, s, window.data());
            want += objective(ctx.patches[r * g.out_w() + s].code.alpha, window, dict.matrix, en);
        }
    CHECK(csf_unsup_loss(ctx, dict) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("reconstruction gradients agree with finite differences") {
    GradCheckReport report = check_csf_unsup_gradients(7, 5);
    CHECK(report.instances == 5);
    CHECK(report.max_rel_err < report.tolerance);
}

TEST_CASE("geometry rejects windows larger than the image") {
    PatchGeometry g{3, 3, 1, 5, 5};
    CHECK_THROWS_AS(g.validate(), DimensionError);
}
