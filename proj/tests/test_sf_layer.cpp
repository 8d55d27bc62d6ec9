#include <cmath>

#include "doctest.h"
#include "sfnn/gradcheck.hpp"
#include "sfnn/sf_layer.hpp"
#include "test_support.hpp"

using namespace sfnn;

TEST_CASE("forward is zero above the correlation threshold") {
    Rng rng(202);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = norm_inf(matvec_t(dict.matrix, x));
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    CHECK(ctx.code.support.empty());
    for (std::size_t j = 0; j < 12; ++j) CHECK(ctx.code.alpha[j] == 0.0);
}

TEST_CASE("forward soft-thresholds under the identity dictionary") {
    Dictionary dict(Tensor::identity(2));
    ElasticNetParams en;
    en.lambda1 = 0.5;
    en.lambda2 = 1e-12;
    SfContext ctx = sf_forward(Tensor::vector({1.0, 0.2}), dict, en);
    CHECK(ctx.code.alpha[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(ctx.code.alpha[1] == 0.0);
}

TEST_CASE("forward matches the reference solver on a 16x32 instance") {
    Rng rng(210);
    Dictionary dict = random_dictionary(16, 32, rng);
    Tensor x = testsup::random_vector(16, rng);
    ElasticNetParams en;
    en.lambda1 = 0.15;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    SparseCode ref = oracle_solve(x, dict.matrix, en);
    CHECK(testsup::max_abs_diff(ctx.code.alpha, ref.alpha) < 1e-5);
}

TEST_CASE("auxiliary solve is zero off an empty support") {
    Rng rng(220);
    Dictionary dict = random_dictionary(6, 9, rng);
    SfContext ctx;
    ctx.input = Tensor({6});
    ctx.params.lambda2 = 0.01;
    ctx.code.alpha = Tensor({9});
    ctx.code.residual = Tensor({6});
    Tensor b = compute_b(ctx, dict, testsup::random_vector(9, rng));
    for (std::size_t j = 0; j < 9; ++j) CHECK(b[j] == 0.0);
}

TEST_CASE("auxiliary solve passes gradients through orthonormal columns") {
    // Identity dictionary: the support Gram is the identity, so b equals the
    // incoming gradient on the support (ridge term in the small limit).
    Dictionary dict(Tensor::identity(5));
    SfContext ctx;
    ctx.params.lambda2 = 1e-12;
    ctx.code.alpha = Tensor({5});
    ctx.code.alpha[1] = 0.3;
    ctx.code.alpha[4] = -0.7;
    ctx.code.support = {1, 4};
    Tensor g = Tensor::vector({1.0, 2.0, 3.0, 4.0, 5.0});
    Tensor b = compute_b(ctx, dict, g);
    CHECK(b[0] == 0.0);
    CHECK(b[1] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(b[2] == 0.0);
    CHECK(b[3] == 0.0);
    CHECK(b[4] == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("auxiliary solve matches an explicit-inverse computation") {
    Rng rng(230);
    Dictionary dict = random_dictionary(10, 14, rng);
    SfContext ctx;
    ctx.params.lambda2 = 0.01;
    ctx.code.alpha = Tensor({14});
    ctx.code.support = {1, 3, 7, 11};
    for (std::size_t j : ctx.code.support) ctx.code.alpha[j] = 0.5;
    Tensor g = testsup::random_vector(14, rng);
    Tensor b = compute_b(ctx, dict, g);

    const std::size_t ns = ctx.code.support.size();
    Tensor G({ns, ns});
    for (std::size_t a = 0; a < ns; ++a)
        for (std::size_t c = 0; c < ns; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < 10; ++i)
                s += dict.matrix(i, ctx.code.support[a]) * dict.matrix(i, ctx.code.support[c]);
            G(a, c) = s + (a == c ? 0.01 : 0.0);
        }
    Tensor inv = testsup::gauss_jordan_inverse(G);
    for (std::size_t a = 0; a < ns; ++a) {
        double want = 0.0;
        for (std::size_t c = 0; c < ns; ++c) want += inv(a, c) * g[ctx.code.support[c]];
        CHECK(b[ctx.code.support[a]] == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("backward is zero for a zero incoming gradient") {
    Rng rng(240);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = 0.1;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    REQUIRE(!ctx.code.support.empty());
    SfGrads g = sf_backward(ctx, dict, Tensor({12}));
    CHECK(norm_inf(g.grad_dict) == 0.0);
    CHECK(norm_inf(g.grad_input) == 0.0);
}

TEST_CASE("backward is zero for an empty support") {
    Rng rng(250);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = norm_inf(matvec_t(dict.matrix, x)) + 1.0;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    REQUIRE(ctx.code.support.empty());
    SfGrads g = sf_backward(ctx, dict, testsup::random_vector(12, rng));
    CHECK(norm_inf(g.grad_dict) == 0.0);
    CHECK(norm_inf(g.grad_input) == 0.0);
}

TEST_CASE("backward gradients agree with finite differences") {
    GradCheckReport report = check_sf_gradients(7, 10);
    CHECK(report.instances == 10);
    CHECK(report.max_rel_err < report.tolerance);
}

TEST_CASE("renormalize leaves unit and short columns alone, shrinks long ones") {
    Dictionary dict(Tensor::identity(3));
    dict.matrix(0, 0) = 1.0; // unit column
    dict.matrix(1, 1) = 0.5; // short column
    dict.matrix(2, 2) = 2.0; // long column
    renormalize(dict);
    CHECK(dict.matrix(0, 0) == 1.0);
    CHECK(dict.matrix(1, 1) == 0.5);
    CHECK(dict.matrix(2, 2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("renormalize caps norms and preserves directions") {
    Rng rng(260);
    Dictionary dict = random_dictionary(7, 9, rng);
    for (std::size_t i = 0; i < dict.matrix.size(); ++i) dict.matrix[i] *= uniform(rng, 0.3, 3.0);
    Dictionary before = dict;
    renormalize(dict);
    for (std::size_t j = 0; j < 9; ++j) {
        double norm = 0.0, cross = 0.0, bnorm = 0.0;
        for (std::size_t i = 0; i < 7; ++i) {
            norm += dict.matrix(i, j) * dict.matrix(i, j);
            bnorm += before.matrix(i, j) * before.matrix(i, j);
            cross += dict.matrix(i, j) * before.matrix(i, j);
        }
        CHECK(std::sqrt(norm) <= 1.0 + 1e-12);
        // direction preserved: cosine of 1
        CHECK(cross / std::sqrt(norm * bnorm) == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Idempotent up to one rescale ulp: a capped column re-measures at
    // 1 +/- eps, so a second pass may nudge entries by machine precision.
    Dictionary once = dict;
    renormalize(dict);
    CHECK(testsup::max_abs_diff(once.matrix, dict.matrix) < 1e-14);
}

TEST_CASE("reconstruction loss at a zero code is the input energy") {
    Rng rng(270);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = norm_inf(matvec_t(dict.matrix, x)) + 0.5;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    REQUIRE(ctx.code.support.empty());
    CHECK(unsup_loss(ctx, dict) == doctest::Approx(0.5 * dot(x, x)).epsilon(1e-12));
}

TEST_CASE("reconstruction loss vanishes in the exact-reconstruction limit") {
    Rng rng(280);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x({8});
    for (std::size_t i = 0; i < 8; ++i) x[i] = dict.matrix(i, 3); // exactly one atom
    ElasticNetParams en;
    en.lambda1 = 1e-8;
    en.lambda2 = 1e-10;
    SfContext ctx = sf_forward(x, dict, en);
    CHECK(unsup_loss(ctx, dict) < 1e-6);
}

TEST_CASE("reconstruction loss equals an independent objective evaluation") {
    Rng rng(290);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = 0.15;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    CHECK(unsup_loss(ctx, dict) ==
          doctest::Approx(objective(ctx.code.alpha, x, dict.matrix, en)).epsilon(1e-12));
}

TEST_CASE("reconstruction gradients vanish at perfect reconstruction") {
    Rng rng(300);
    Dictionary dict = random_dictionary(6, 8, rng);
    SfContext ctx;
    ctx.params.lambda2 = 0.01;
    ctx.code.alpha = Tensor({8});
    ctx.code.alpha[2] = 1.0;
    ctx.code.support = {2};
    ctx.code.residual = Tensor({6}); // zero residual: input reconstructed exactly
    SfGrads g = unsup_grads(ctx, dict);
    CHECK(norm_inf(g.grad_dict) == 0.0);
    CHECK(norm_inf(g.grad_input) == 0.0);
}

TEST_CASE("reconstruction gradients at a zero code reduce to the input") {
    Rng rng(310);
    Dictionary dict = random_dictionary(8, 12, rng);
    Tensor x = testsup::random_vector(8, rng);
    ElasticNetParams en;
    en.lambda1 = norm_inf(matvec_t(dict.matrix, x)) + 0.5;
    en.lambda2 = 0.01;
    SfContext ctx = sf_forward(x, dict, en);
    SfGrads g = unsup_grads(ctx, dict);
    CHECK(norm_inf(g.grad_dict) == 0.0);
    CHECK(testsup::max_abs_diff(g.grad_input, x) == 0.0);
}

TEST_CASE("reconstruction gradients agree with finite differences") {
    GradCheckReport report = check_sf_unsup_gradients(7, 10);
    CHECK(report.instances == 10);
    CHECK(report.max_rel_err < report.tolerance);
}

TEST_CASE("mean support size shrinks as the l1 weight grows") {
    Rng rng(320);
    Dictionary dict = random_dictionary(12, 20, rng);
    std::vector<Tensor> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(testsup::random_vector(12, rng));

    double prev_mean = 1e300;
    for (double l1 : {0.05, 0.1, 0.2, 0.4}) {
        ElasticNetParams en;
        en.lambda1 = l1;
        en.lambda2 = 0.01;
        double total = 0.0;
        for (const Tensor& x : batch) total += double(sf_forward(x, dict, en).code.support.size());
        const double mean = total / double(batch.size());
        CHECK(mean <= prev_mean + 1e-12);
        prev_mean = mean;
    }
}
