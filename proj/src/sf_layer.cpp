#include "sfnn/sf_layer.hpp"

#include <cmath>

namespace sfnn {

Dictionary random_dictionary(std::size_t m, std::size_t K, Rng& rng) {
    Tensor P({m, K});
    GaussianDraw gauss;
    for (std::size_t i = 0; i < m * K; ++i) P[i] = gauss(rng);
    for (std::size_t j = 0; j < K; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += P(i, j) * P(i, j);
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t i = 0; i < m; ++i) P(i, j) *= inv;
    }
    return Dictionary(std::move(P));
}

SfContext sf_forward(const Tensor& a_prev, const Dictionary& dict, const ElasticNetParams& params) {
    return sf_forward(a_prev, dict, transpose(dict.matrix), params);
}

SfContext sf_forward(const Tensor& a_prev, const Dictionary& dict, const Tensor& dict_t,
                     const ElasticNetParams& params) {
    SfContext ctx;
    ctx.input = a_prev;
    ctx.params = params;
    ctx.code = solve(a_prev, dict.matrix, dict_t, params);
    return ctx;
}

Tensor compute_b(const SfContext& ctx, const Dictionary& dict, const Tensor& grad_a) {
    const std::size_t K = dict.atoms();
    const std::size_t m = dict.input_dim();
    if (grad_a.size() != K) {
        throw DimensionError("compute_b: gradient length " + std::to_string(grad_a.size()) +
                             " does not match atom count " + std::to_string(K));
    }
    Tensor b({K});
    const auto& support = ctx.code.support;
    const std::size_t ns = support.size();
    if (ns == 0) return b;

    // Gram of the support columns plus the ridge term, then one solve.
    Tensor G({ns, ns});
    const Tensor& P = dict.matrix;
    for (std::size_t a = 0; a < ns; ++a) {
        for (std::size_t c = a; c < ns; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += P(i, support[a]) * P(i, support[c]);
            G(a, c) = s;
            G(c, a) = s;
        }
        G(a, a) += ctx.params.lambda2;
    }
    Tensor rhs({ns});
    for (std::size_t a = 0; a < ns; ++a) rhs[a] = grad_a[support[a]];
    Tensor bs = chol_solve(chol_factor(G), rhs);
    for (std::size_t a = 0; a < ns; ++a) b[support[a]] = bs[a];
    return b;
}

SfGrads sf_backward(const SfContext& ctx, const Dictionary& dict, const Tensor& grad_a) {
    const std::size_t K = dict.atoms();
    const std::size_t m = dict.input_dim();
    const Tensor& P = dict.matrix;
    const Tensor b = compute_b(ctx, dict, grad_a);

    SfGrads out;
    out.grad_input = Tensor({m});
    out.grad_dict = Tensor({m, K});
    const auto& support = ctx.code.support;
    if (support.empty()) return out;

    // P b touches only support columns.
    for (std::size_t j : support) {
        const double bj = b[j];
        for (std::size_t i = 0; i < m; ++i) out.grad_input[i] += P(i, j) * bj;
    }

    // grad_dict = -(P b) alpha^T + residual b^T; both alpha and b vanish off
    // the support, so only support columns are nonzero.
    const Tensor& r = ctx.code.residual;
    for (std::size_t j : support) {
        const double aj = ctx.code.alpha[j];
        const double bj = b[j];
        for (std::size_t i = 0; i < m; ++i)
            out.grad_dict(i, j) = -out.grad_input[i] * aj + r[i] * bj;
    }
    return out;
}

void renormalize(Dictionary& dict) {
    Tensor& P = dict.matrix;
    const std::size_t m = dict.input_dim();
    const std::size_t K = dict.atoms();
    for (std::size_t j = 0; j < K; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += P(i, j) * P(i, j);
        if (s > 1.0) {
            const double inv = 1.0 / std::sqrt(s);
            for (std::size_t i = 0; i < m; ++i) P(i, j) *= inv;
        }
    }
}

double unsup_loss(const SfContext& ctx, const Dictionary& dict) {
    (void)dict;
    const Tensor& r = ctx.code.residual;
    const Tensor& a = ctx.code.alpha;
    return 0.5 * dot(r, r) + ctx.params.lambda1 * norm1(a) + 0.5 * ctx.params.lambda2 * dot(a, a);
}

SfGrads unsup_grads(const SfContext& ctx, const Dictionary& dict) {
    const std::size_t m = dict.input_dim();
    const std::size_t K = dict.atoms();
    SfGrads out;
    out.grad_input = ctx.code.residual;
    out.grad_dict = Tensor({m, K});
    const Tensor& r = ctx.code.residual;
    for (std::size_t j : ctx.code.support) {
        const double aj = ctx.code.alpha[j];
        for (std::size_t i = 0; i < m; ++i) out.grad_dict(i, j) = -r[i] * aj;
    }
    return out;
}

} // namespace sfnn
