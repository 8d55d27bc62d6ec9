#include "sfnn/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <memory>

namespace sfnn {

namespace {

constexpr double kStep = 1e-6;

double rel_err(const Tensor& analytic, const Tensor& fd) {
    double diff = 0.0, scale = 1e-10;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - fd[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
    }
    return diff / scale;
}

/// Input with a code of roughly the wanted support size: a sparse atom
/// combination plus a little noise.
Tensor planted_input(const Tensor& P, std::size_t plant, Rng& rng) {
    const std::size_t m = P.rows(), K = P.cols();
    Tensor x({m});
    GaussianDraw gauss;
    for (std::size_t t = 0; t < plant; ++t) {
        const std::size_t j = uniform_index(rng, K);
        const double w = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.5, 1.5);
        for (std::size_t i = 0; i < m; ++i) x[i] += w * P(i, j);
    }
    for (std::size_t i = 0; i < m; ++i) x[i] += 0.05 * gauss(rng);
    return x;
}

/// Margin of the code against support flips: distance of inactive
/// correlations to the threshold and of active coefficients to zero. Small
/// margins make finite differences cross a support boundary.
double support_margin(const SparseCode& code, const Tensor& x, const Tensor& P,
                      const ElasticNetParams& en) {
    Tensor c = matvec_t(P, code.residual);
    double margin = 1e300;
    for (std::size_t j = 0; j < P.cols(); ++j) {
        if (code.alpha[j] != 0.0)
            margin = std::min(margin, std::abs(code.alpha[j]));
        else
            margin = std::min(margin, en.lambda1 - std::abs(c[j]));
    }
    (void)x;
    return margin;
}

ElasticNetParams moderate_params(const Tensor& P, const Tensor& x) {
    ElasticNetParams en;
    en.lambda2 = 0.01;
    en.lambda1 = 0.25 * norm_inf(matvec_t(P, x));
    return en;
}

} // namespace

GradCheckReport check_sf_gradients(std::uint64_t seed, std::size_t instances) {
    GradCheckReport report{"sf_backward", instances};
    const std::size_t m = 8, K = 12;

    std::size_t attempt = 0;
    while (report.instances < instances && attempt < 40 * instances + 40) {
        Rng rng(derive_seed(seed, attempt++));
        Dictionary dict = random_dictionary(m, K, rng);
        Tensor x = planted_input(dict.matrix, 4, rng);
        ElasticNetParams en = moderate_params(dict.matrix, x);

        SfContext ctx = sf_forward(x, dict, en);
        const auto& support = ctx.code.support;
        if (support.size() < 2 || support.size() > 8) continue;
        if (support_margin(ctx.code, x, dict.matrix, en) < 1e-3) continue;

        // Downstream quadratic loss 1/2 ||alpha - t||^2.
        Tensor t({K});
        GaussianDraw gauss;
        for (std::size_t i = 0; i < K; ++i) t[i] = gauss(rng);
        Tensor grad_a = ctx.code.alpha;
        axpy(-1.0, t, grad_a);
        SfGrads analytic = sf_backward(ctx, dict, grad_a);

        const auto loss_at = [&](const Dictionary& d, const Tensor& input) {
            SparseCode code = solve(input, d.matrix, en);
            if (code.support != support) return std::nan("");
            Tensor diff = code.alpha;
            axpy(-1.0, t, diff);
            return 0.5 * dot(diff, diff);
        };

        bool stable = true;
        Tensor fd_dict({m, K});
        for (std::size_t i = 0; i < m * K && stable; ++i) {
            Dictionary d = dict;
            d.matrix[i] += kStep;
            const double up = loss_at(d, x);
            d.matrix[i] -= 2 * kStep;
            const double dn = loss_at(d, x);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_dict[i] = (up - dn) / (2 * kStep);
        }
        Tensor fd_input({m});
        for (std::size_t i = 0; i < m && stable; ++i) {
            Tensor xp = x;
            xp[i] += kStep;
            const double up = loss_at(dict, xp);
            xp[i] -= 2 * kStep;
            const double dn = loss_at(dict, xp);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_input[i] = (up - dn) / (2 * kStep);
        }
        if (!stable) continue;

        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_dict, fd_dict));
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_input, fd_input));
        ++report.instances;
    }
    return report;
}

GradCheckReport check_sf_unsup_gradients(std::uint64_t seed, std::size_t instances) {
    GradCheckReport report{"sf_unsup", instances};
    const std::size_t m = 8, K = 12;

    std::size_t attempt = 0;
    while (report.instances < instances && attempt < 40 * instances + 40) {
        Rng rng(derive_seed(seed, 0x100000 + attempt++));
        Dictionary dict = random_dictionary(m, K, rng);
        Tensor x = planted_input(dict.matrix, 4, rng);
        ElasticNetParams en = moderate_params(dict.matrix, x);

        SfContext ctx = sf_forward(x, dict, en);
        const auto& support = ctx.code.support;
        if (support.empty() || support.size() > 8) continue;
        if (support_margin(ctx.code, x, dict.matrix, en) < 1e-3) continue;

        SfGrads analytic = unsup_grads(ctx, dict);

        const auto loss_at = [&](const Dictionary& d, const Tensor& input) {
            SfContext c = sf_forward(input, d, en);
            if (c.code.support != support) return std::nan("");
            return unsup_loss(c, d);
        };

        bool stable = true;
        Tensor fd_dict({m, K});
        for (std::size_t i = 0; i < m * K && stable; ++i) {
            Dictionary d = dict;
            d.matrix[i] += kStep;
            const double up = loss_at(d, x);
            d.matrix[i] -= 2 * kStep;
            const double dn = loss_at(d, x);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_dict[i] = (up - dn) / (2 * kStep);
        }
        Tensor fd_input({m});
        for (std::size_t i = 0; i < m && stable; ++i) {
            Tensor xp = x;
            xp[i] += kStep;
            const double up = loss_at(dict, xp);
            xp[i] -= 2 * kStep;
            const double dn = loss_at(dict, xp);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_input[i] = (up - dn) / (2 * kStep);
        }
        if (!stable) continue;

        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_dict, fd_dict));
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_input, fd_input));
        ++report.instances;
    }
    return report;
}

namespace {

struct CsfInstance {
    Dictionary dict;
    Tensor image;
    PatchGeometry geom;
    ElasticNetParams en;
    std::vector<std::vector<std::size_t>> supports;
    CsfContext ctx;
    Tensor out;
};

bool make_csf_instance(std::uint64_t seed, CsfInstance& inst) {
    Rng rng(seed);
    const std::size_t h = 6, w = 6, c = 1, win = 3, K = 8;
    inst.geom = PatchGeometry{h, w, c, win, win};
    inst.dict = random_dictionary(win * win * c, K, rng);
    inst.image = Tensor({h, w, c});
    GaussianDraw gauss;
    for (std::size_t i = 0; i < inst.image.size(); ++i) inst.image[i] = gauss(rng);

    inst.en.lambda2 = 0.01;
    inst.en.lambda1 = 0.5; // against unit-gaussian pixels: small, varied supports

    inst.out = csf_forward(inst.image, inst.dict, inst.geom, inst.en, inst.ctx);
    inst.supports.clear();
    for (const SfContext& p : inst.ctx.patches) {
        if (support_margin(p.code, p.input, inst.dict.matrix, inst.en) < 1e-3) return false;
        inst.supports.push_back(p.code.support);
    }
    return true;
}

bool csf_supports_match(const CsfContext& ctx, const std::vector<std::vector<std::size_t>>& ref) {
    for (std::size_t p = 0; p < ctx.patches.size(); ++p)
        if (ctx.patches[p].code.support != ref[p]) return false;
    return true;
}

} // namespace

GradCheckReport check_csf_gradients(std::uint64_t seed, std::size_t instances) {
    GradCheckReport report{"csf_backward", instances};

    std::size_t attempt = 0;
    while (report.instances < instances && attempt < 40 * instances + 40) {
        CsfInstance inst;
        if (!make_csf_instance(derive_seed(seed, 0x200000 + attempt++), inst)) continue;

        Rng rng(derive_seed(seed, 0x300000 + attempt));
        Tensor t(inst.out.dims());
        GaussianDraw gauss;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = gauss(rng);
        Tensor grad_a = inst.out;
        axpy(-1.0, t, grad_a);
        CsfGrads analytic = csf_backward(inst.ctx, inst.dict, grad_a);

        const auto loss_at = [&](const Dictionary& d, const Tensor& image) {
            CsfContext ctx;
            Tensor out = csf_forward(image, d, inst.geom, inst.en, ctx);
            if (!csf_supports_match(ctx, inst.supports)) return std::nan("");
            Tensor diff = out;
            axpy(-1.0, t, diff);
            return 0.5 * dot(diff, diff);
        };

        bool stable = true;
        Tensor fd_dict(inst.dict.matrix.dims());
        for (std::size_t i = 0; i < fd_dict.size() && stable; ++i) {
            Dictionary d = inst.dict;
            d.matrix[i] += kStep;
            const double up = loss_at(d, inst.image);
            d.matrix[i] -= 2 * kStep;
            const double dn = loss_at(d, inst.image);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_dict[i] = (up - dn) / (2 * kStep);
        }
        Tensor fd_input(inst.image.dims());
        for (std::size_t i = 0; i < fd_input.size() && stable; ++i) {
            Tensor im = inst.image;
            im[i] += kStep;
            const double up = loss_at(inst.dict, im);
            im[i] -= 2 * kStep;
            const double dn = loss_at(inst.dict, im);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_input[i] = (up - dn) / (2 * kStep);
        }
        if (!stable) continue;

        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_dict, fd_dict));
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_input, fd_input));
        ++report.instances;
    }
    return report;
}

GradCheckReport check_csf_unsup_gradients(std::uint64_t seed, std::size_t instances) {
    GradCheckReport report{"csf_unsup", instances};

    std::size_t attempt = 0;
    while (report.instances < instances && attempt < 40 * instances + 40) {
        CsfInstance inst;
        if (!make_csf_instance(derive_seed(seed, 0x400000 + attempt++), inst)) continue;

        CsfGrads analytic = csf_unsup_grads(inst.ctx, inst.dict);

        const auto loss_at = [&](const Dictionary& d, const Tensor& image) {
            CsfContext ctx;
            csf_forward(image, d, inst.geom, inst.en, ctx);
            if (!csf_supports_match(ctx, inst.supports)) return std::nan("");
            return csf_unsup_loss(ctx, d);
        };

        bool stable = true;
        Tensor fd_dict(inst.dict.matrix.dims());
        for (std::size_t i = 0; i < fd_dict.size() && stable; ++i) {
            Dictionary d = inst.dict;
            d.matrix[i] += kStep;
            const double up = loss_at(d, inst.image);
            d.matrix[i] -= 2 * kStep;
            const double dn = loss_at(d, inst.image);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_dict[i] = (up - dn) / (2 * kStep);
        }
        Tensor fd_input(inst.image.dims());
        for (std::size_t i = 0; i < fd_input.size() && stable; ++i) {
            Tensor im = inst.image;
            im[i] += kStep;
            const double up = loss_at(inst.dict, im);
            im[i] -= 2 * kStep;
            const double dn = loss_at(inst.dict, im);
            if (std::isnan(up) || std::isnan(dn)) stable = false;
            fd_input[i] = (up - dn) / (2 * kStep);
        }
        if (!stable) continue;

        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_dict, fd_dict));
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_input, fd_input));
        ++report.instances;
    }
    return report;
}

namespace {

/// One classic layer against finite differences of 1/2 ||forward - t||^2
/// over every parameter entry and every input entry.
GradCheckReport check_plain_layer(const std::string& kind, std::uint64_t seed,
                                  std::size_t instances,
                                  const std::function<std::unique_ptr<Layer>(Rng&)>& make,
                                  const Shape& input_shape) {
    GradCheckReport report{kind, instances};
    for (std::size_t n = 0; n < instances; ++n) {
        Rng rng(derive_seed(seed, 0x500000 + n));
        std::unique_ptr<Layer> layer = make(rng);

        Tensor x(input_shape);
        GaussianDraw gauss;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = gauss(rng);

        std::unique_ptr<LayerCtx> ctx;
        Tensor out = layer->forward(x, ctx);
        Tensor t(out.dims());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = gauss(rng);

        Tensor grad_out = out;
        axpy(-1.0, t, grad_out);
        LayerGrads analytic = layer->backward(*ctx, grad_out);

        const auto loss_now = [&] {
            std::unique_ptr<LayerCtx> c2;
            Tensor o = layer->forward(x, c2);
            Tensor diff = o;
            axpy(-1.0, t, diff);
            return 0.5 * dot(diff, diff);
        };

        auto params = layer->param_tensors();
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor fd(params[p]->dims());
            for (std::size_t i = 0; i < fd.size(); ++i) {
                const double keep = (*params[p])[i];
                (*params[p])[i] = keep + kStep;
                const double up = loss_now();
                (*params[p])[i] = keep - kStep;
                const double dn = loss_now();
                (*params[p])[i] = keep;
                fd[i] = (up - dn) / (2 * kStep);
            }
            report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.params[p], fd));
        }

        Tensor fd_input(x.dims());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + kStep;
            const double up = loss_now();
            x[i] = keep - kStep;
            const double dn = loss_now();
            x[i] = keep;
            fd_input[i] = (up - dn) / (2 * kStep);
        }
        report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic.grad_input, fd_input));
        ++report.instances;
    }
    return report;
}

} // namespace

GradCheckReport check_conv_gradients(std::uint64_t seed, std::size_t instances) {
    return check_plain_layer(
        "conv", seed, instances,
        [](Rng& rng) { return std::make_unique<ConvLayer>("conv", 3, 3, 2, 4, true, rng); },
        {8, 8, 2});
}

GradCheckReport check_linear_gradients(std::uint64_t seed, std::size_t instances) {
    return check_plain_layer(
        "linear", seed, instances,
        [](Rng& rng) { return std::make_unique<LinearLayer>("linear", 12, 7, true, rng); }, {12});
}

GradCheckReport check_relu_gradients(std::uint64_t seed, std::size_t instances) {
    return check_plain_layer(
        "relu", seed, instances, [](Rng&) { return std::make_unique<ReluLayer>("relu"); }, {9});
}

GradCheckReport check_maxpool_gradients(std::uint64_t seed, std::size_t instances) {
    return check_plain_layer(
        "maxpool", seed, instances,
        [](Rng&) { return std::make_unique<MaxPoolLayer>("maxpool", 2); }, {8, 8, 2});
}

GradCheckReport check_network_gradients(std::uint64_t seed, const std::string& variant) {
    GradCheckReport report{"network_" + variant, 20};
    report.tolerance = 1e-3;

    TopologySpec spec;
    spec.variant = variant;
    spec.input_shape = {12, 12, 1};
    spec.conv1_channels = 4;
    spec.conv2_channels = 6;
    spec.hidden = 16;
    spec.classes = 4;
    spec.window = 3;
    spec.en.lambda1 = 0.1;
    spec.en.lambda2 = 0.01;
    spec.seed = derive_seed(seed, 0x600000);
    Network net = build_network(spec);

    Rng rng(derive_seed(seed, 0x600001));
    Tensor x(spec.input_shape);
    GaussianDraw gauss;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * gauss(rng);
    const std::size_t label = uniform_index(rng, spec.classes);

    NetPass pass;
    Tensor logits = net_forward(net, x, pass);
    Tensor grad_logits;
    softmax_loss(logits, label, &grad_logits);

    auto tensors = net.param_tensors();
    std::vector<Tensor> grads;
    for (Tensor* t : tensors) grads.emplace_back(t->dims());
    net_backward(net, pass, grad_logits, 0.0, grads);

    for (std::size_t probe = 0; probe < report.requested; ++probe) {
        const std::size_t pi = uniform_index(rng, tensors.size());
        const std::size_t ei = uniform_index(rng, tensors[pi]->size());
        const double keep = (*tensors[pi])[ei];
        (*tensors[pi])[ei] = keep + kStep;
        const double up = net_loss(net, x, label);
        (*tensors[pi])[ei] = keep - kStep;
        const double dn = net_loss(net, x, label);
        (*tensors[pi])[ei] = keep;
        const double fd = (up - dn) / (2 * kStep);
        const double an = grads[pi][ei];
        const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, err);
        ++report.instances;
    }
    return report;
}

std::vector<GradCheckReport> run_all_gradchecks(std::uint64_t seed) {
    std::vector<GradCheckReport> reports;
    reports.push_back(check_sf_gradients(seed, 50));
    reports.push_back(check_sf_unsup_gradients(seed, 50));
    reports.push_back(check_csf_gradients(seed, 50));
    reports.push_back(check_csf_unsup_gradients(seed, 50));
    reports.push_back(check_conv_gradients(seed, 5));
    reports.push_back(check_linear_gradients(seed, 5));
    reports.push_back(check_relu_gradients(seed, 5));
    reports.push_back(check_maxpool_gradients(seed, 5));
    for (const char* variant : {"lenet", "csf", "sf", "csf_sf"})
        reports.push_back(check_network_gradients(seed, variant));
    return reports;
}

} // namespace sfnn
