#include "sfnn/layers.hpp"

#include <cmath>
#include <limits>

namespace sfnn {

namespace {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor gaussian_init(Shape dims, double stddev, Rng& rng) {
    Tensor t(std::move(dims));
    GaussianDraw gauss;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * gauss(rng);
    return t;
}

struct InputCtx : LayerCtx {
    Tensor input;
};

struct MaxPoolCtx : LayerCtx {
    Shape input_shape;
    std::vector<std::size_t> argmax; // flat input index per output element
};

struct SfLayerCtx : LayerCtx {
    SfContext sf;
    Shape input_shape;
};

struct CsfLayerCtx : LayerCtx {
    CsfContext csf;
};

template <typename CtxT>
const CtxT& ctx_cast(const LayerCtx& ctx, const std::string& name) {
    const auto* typed = dynamic_cast<const CtxT*>(&ctx);
    if (!typed) throw Error(name + ": backward called with a mismatched context");
    return *typed;
}

} // namespace

// ---------------------------------------------------------------- ConvLayer

ConvLayer::ConvLayer(std::string name, std::size_t h_Q, std::size_t w_Q, std::size_t in_c,
                     std::size_t out_c, bool with_bias, Rng& rng)
    : Layer(std::move(name)), h_Q_(h_Q), w_Q_(w_Q), in_c_(in_c), out_c_(out_c),
      with_bias_(with_bias) {
    const double stddev = 1.0 / std::sqrt(double(h_Q * w_Q * in_c));
    weights = gaussian_init({h_Q, w_Q, in_c, out_c}, stddev, rng);
    if (with_bias_) bias = Tensor({out_c});
}

Shape ConvLayer::output_shape(const Shape& input) const {
    if (input.size() != 3 || input[2] != in_c_)
        throw DimensionError(name() + ": expected h x w x " + std::to_string(in_c_) +
                             " input, got " + shape_to_string(input));
    if (input[0] < h_Q_ || input[1] < w_Q_)
        throw DimensionError(name() + ": input " + shape_to_string(input) +
                             " smaller than " + std::to_string(h_Q_) + "x" + std::to_string(w_Q_) +
                             " window");
    return {input[0] - h_Q_ + 1, input[1] - w_Q_ + 1, out_c_};
}

Tensor ConvLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    const Shape out_dims = output_shape(input.dims());
    auto c = std::make_unique<InputCtx>();
    c->input = input;

    PatchGeometry g{input.dim(0), input.dim(1), in_c_, h_Q_, w_Q_};
    const std::size_t m = g.patch_len();
    Tensor out(out_dims);
    std::vector<double> patch(m);
    const double* W = weights.data(); // m x out_c view
    for (std::size_t r = 0; r < g.out_h(); ++r) {
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            extract_patch(input, g, r, s, patch.data());
            double* o = out.data() + (r * g.out_w() + s) * out_c_;
            if (with_bias_)
                for (std::size_t k = 0; k < out_c_; ++k) o[k] = bias[k];
            for (std::size_t i = 0; i < m; ++i) {
                const double pi = patch[i];
                if (pi == 0.0) continue;
                const double* wrow = W + i * out_c_;
                for (std::size_t k = 0; k < out_c_; ++k) o[k] += pi * wrow[k];
            }
        }
    }
    ctx = std::move(c);
    return out;
}

LayerGrads ConvLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<InputCtx>(ctx, name());
    const Tensor& input = c.input;
    PatchGeometry g{input.dim(0), input.dim(1), in_c_, h_Q_, w_Q_};
    const std::size_t m = g.patch_len();

    LayerGrads out;
    out.grad_input = Tensor(input.dims());
    Tensor grad_w({h_Q_, w_Q_, in_c_, out_c_});
    Tensor grad_b = with_bias_ ? Tensor({out_c_}) : Tensor();

    std::vector<double> patch(m), gpatch(m);
    const double* W = weights.data();
    double* GW = grad_w.data();
    for (std::size_t r = 0; r < g.out_h(); ++r) {
        for (std::size_t s = 0; s < g.out_w(); ++s) {
            const double* go = grad_output.data() + (r * g.out_w() + s) * out_c_;
            extract_patch(input, g, r, s, patch.data());
            for (std::size_t i = 0; i < m; ++i) {
                const double* wrow = W + i * out_c_;
                double* gwrow = GW + i * out_c_;
                double acc = 0.0;
                const double pi = patch[i];
                for (std::size_t k = 0; k < out_c_; ++k) {
                    gwrow[k] += pi * go[k];
                    acc += wrow[k] * go[k];
                }
                gpatch[i] = acc;
            }
            scatter_patch_add(out.grad_input, g, r, s, gpatch.data());
            if (with_bias_)
                for (std::size_t k = 0; k < out_c_; ++k) grad_b[k] += go[k];
        }
    }
    out.params.push_back(std::move(grad_w));
    if (with_bias_) out.params.push_back(std::move(grad_b));
    return out;
}

std::vector<Tensor*> ConvLayer::param_tensors() {
    std::vector<Tensor*> p{&weights};
    if (with_bias_) p.push_back(&bias);
    return p;
}

std::vector<const Tensor*> ConvLayer::param_tensors() const {
    std::vector<const Tensor*> p{&weights};
    if (with_bias_) p.push_back(&bias);
    return p;
}

std::vector<std::string> ConvLayer::param_labels() const {
    std::vector<std::string> l{"weights"};
    if (with_bias_) l.push_back("bias");
    return l;
}

// -------------------------------------------------------------- LinearLayer

LinearLayer::LinearLayer(std::string name, std::size_t in_dim, std::size_t out_dim,
                         bool with_bias, Rng& rng)
    : Layer(std::move(name)), in_dim_(in_dim), out_dim_(out_dim), with_bias_(with_bias) {
    weights = gaussian_init({out_dim, in_dim}, 1.0 / std::sqrt(double(in_dim)), rng);
    if (with_bias_) bias = Tensor({out_dim});
}

Shape LinearLayer::output_shape(const Shape& input) const {
    if (shape_size(input) != in_dim_)
        throw DimensionError(name() + ": expected " + std::to_string(in_dim_) +
                             " input values, got " + shape_to_string(input));
    return {out_dim_};
}

Tensor LinearLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    output_shape(input.dims());
    auto c = std::make_unique<InputCtx>();
    c->input = input;
    Tensor out({out_dim_});
    const double* W = weights.data();
    for (std::size_t o = 0; o < out_dim_; ++o) {
        const double* row = W + o * in_dim_;
        double acc = with_bias_ ? bias[o] : 0.0;
        for (std::size_t i = 0; i < in_dim_; ++i) acc += row[i] * input[i];
        out[o] = acc;
    }
    ctx = std::move(c);
    return out;
}

LayerGrads LinearLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<InputCtx>(ctx, name());
    const Tensor& input = c.input;

    LayerGrads out;
    out.grad_input = Tensor(input.dims());
    Tensor grad_w({out_dim_, in_dim_});
    const double* W = weights.data();
    for (std::size_t o = 0; o < out_dim_; ++o) {
        const double go = grad_output[o];
        const double* wrow = W + o * in_dim_;
        double* gwrow = grad_w.data() + o * in_dim_;
        if (go != 0.0) {
            for (std::size_t i = 0; i < in_dim_; ++i) {
                gwrow[i] = go * input[i];
                out.grad_input[i] += go * wrow[i];
            }
        }
    }
    out.params.push_back(std::move(grad_w));
    if (with_bias_) {
        Tensor grad_b({out_dim_});
        for (std::size_t o = 0; o < out_dim_; ++o) grad_b[o] = grad_output[o];
        out.params.push_back(std::move(grad_b));
    }
    return out;
}

std::vector<Tensor*> LinearLayer::param_tensors() {
    std::vector<Tensor*> p{&weights};
    if (with_bias_) p.push_back(&bias);
    return p;
}

std::vector<const Tensor*> LinearLayer::param_tensors() const {
    std::vector<const Tensor*> p{&weights};
    if (with_bias_) p.push_back(&bias);
    return p;
}

std::vector<std::string> LinearLayer::param_labels() const {
    std::vector<std::string> l{"weights"};
    if (with_bias_) l.push_back("bias");
    return l;
}

// ---------------------------------------------------------------- ReluLayer

Tensor ReluLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    auto c = std::make_unique<InputCtx>();
    c->input = input;
    Tensor out(input.dims());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
    ctx = std::move(c);
    return out;
}

LayerGrads ReluLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<InputCtx>(ctx, name());
    LayerGrads out;
    out.grad_input = Tensor(c.input.dims());
    for (std::size_t i = 0; i < c.input.size(); ++i)
        out.grad_input[i] = c.input[i] > 0.0 ? grad_output[i] : 0.0;
    return out;
}

// ------------------------------------------------------------- MaxPoolLayer

Shape MaxPoolLayer::output_shape(const Shape& input) const {
    if (input.size() != 3)
        throw DimensionError(name() + ": expected h x w x c input, got " + shape_to_string(input));
    if (input[0] < window_ || input[1] < window_)
        throw DimensionError(name() + ": input " + shape_to_string(input) + " smaller than " +
                             std::to_string(window_) + "x" + std::to_string(window_) + " window");
    return {input[0] / window_, input[1] / window_, input[2]};
}

Tensor MaxPoolLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    const Shape out_dims = output_shape(input.dims());
    const std::size_t w = input.dim(1), c = input.dim(2);
    auto pc = std::make_unique<MaxPoolCtx>();
    pc->input_shape = input.dims();

    Tensor out(out_dims);
    pc->argmax.assign(out.size(), 0);
    for (std::size_t r = 0; r < out_dims[0]; ++r) {
        for (std::size_t s = 0; s < out_dims[1]; ++s) {
            for (std::size_t k = 0; k < c; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t dr = 0; dr < window_; ++dr) {
                    for (std::size_t ds = 0; ds < window_; ++ds) {
                        const std::size_t idx =
                            ((r * window_ + dr) * w + (s * window_ + ds)) * c + k;
                        if (input[idx] > best) {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (r * out_dims[1] + s) * c + k;
                out[o] = best;
                pc->argmax[o] = best_idx;
            }
        }
    }
    ctx = std::move(pc);
    return out;
}

LayerGrads MaxPoolLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<MaxPoolCtx>(ctx, name());
    LayerGrads out;
    out.grad_input = Tensor(c.input_shape);
    for (std::size_t o = 0; o < grad_output.size(); ++o)
        out.grad_input[c.argmax[o]] += grad_output[o];
    return out;
}

// ------------------------------------------------------------------ SfLayer

SfLayer::SfLayer(std::string name, std::size_t in_dim, std::size_t atoms,
                 ElasticNetParams params, Rng& rng)
    : Layer(std::move(name)), en_params(params), in_dim_(in_dim), atoms_(atoms) {
    dict = random_dictionary(in_dim, atoms, rng);
}

Shape SfLayer::output_shape(const Shape& input) const {
    if (shape_size(input) != in_dim_)
        throw DimensionError(name() + ": expected " + std::to_string(in_dim_) +
                             " input values, got " + shape_to_string(input));
    return {atoms_};
}

Tensor SfLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    output_shape(input.dims());
    auto c = std::make_unique<SfLayerCtx>();
    c->input_shape = input.dims();
    c->sf = sf_forward(input.reshaped({in_dim_}), dict, en_params);
    Tensor out = c->sf.code.alpha;
    ctx = std::move(c);
    return out;
}

LayerGrads SfLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<SfLayerCtx>(ctx, name());
    SfGrads g = sf_backward(c.sf, dict, grad_output);
    LayerGrads out;
    out.grad_input = g.grad_input.reshaped(c.input_shape);
    out.params.push_back(std::move(g.grad_dict));
    return out;
}

std::vector<Tensor*> SfLayer::param_tensors() { return {&dict.matrix}; }
std::vector<const Tensor*> SfLayer::param_tensors() const { return {&dict.matrix}; }
std::vector<std::string> SfLayer::param_labels() const { return {"dict"}; }

double SfLayer::unsup_loss_value(const LayerCtx& ctx) const {
    return unsup_loss(ctx_cast<SfLayerCtx>(ctx, name()).sf, dict);
}

LayerGrads SfLayer::unsup_gradients(const LayerCtx& ctx) const {
    const auto& c = ctx_cast<SfLayerCtx>(ctx, name());
    SfGrads g = unsup_grads(c.sf, dict);
    LayerGrads out;
    out.grad_input = g.grad_input.reshaped(c.input_shape);
    out.params.push_back(std::move(g.grad_dict));
    return out;
}

// ----------------------------------------------------------------- CsfLayer

CsfLayer::CsfLayer(std::string name, std::size_t h_Q, std::size_t w_Q, std::size_t in_c,
                   std::size_t atoms, ElasticNetParams params, Rng& rng)
    : Layer(std::move(name)), en_params(params), h_Q_(h_Q), w_Q_(w_Q), in_c_(in_c),
      atoms_(atoms) {
    dict = random_dictionary(h_Q * w_Q * in_c, atoms, rng);
}

PatchGeometry CsfLayer::geometry_for(const Shape& input) const {
    if (input.size() != 3 || input[2] != in_c_)
        throw DimensionError(name() + ": expected h x w x " + std::to_string(in_c_) +
                             " input, got " + shape_to_string(input));
    PatchGeometry g{input[0], input[1], in_c_, h_Q_, w_Q_};
    g.validate();
    return g;
}

Shape CsfLayer::output_shape(const Shape& input) const {
    PatchGeometry g = geometry_for(input);
    return {g.out_h(), g.out_w(), atoms_};
}

Tensor CsfLayer::forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const {
    PatchGeometry g = geometry_for(input.dims());
    auto c = std::make_unique<CsfLayerCtx>();
    Tensor out = csf_forward(input, dict, g, en_params, c->csf);
    ctx = std::move(c);
    return out;
}

LayerGrads CsfLayer::backward(const LayerCtx& ctx, const Tensor& grad_output) const {
    const auto& c = ctx_cast<CsfLayerCtx>(ctx, name());
    CsfGrads g = csf_backward(c.csf, dict, grad_output);
    LayerGrads out;
    out.grad_input = std::move(g.grad_input);
    out.params.push_back(std::move(g.grad_dict));
    return out;
}

std::vector<Tensor*> CsfLayer::param_tensors() { return {&dict.matrix}; }
std::vector<const Tensor*> CsfLayer::param_tensors() const { return {&dict.matrix}; }
std::vector<std::string> CsfLayer::param_labels() const { return {"dict"}; }

double CsfLayer::unsup_loss_value(const LayerCtx& ctx) const {
    return csf_unsup_loss(ctx_cast<CsfLayerCtx>(ctx, name()).csf, dict);
}

LayerGrads CsfLayer::unsup_gradients(const LayerCtx& ctx) const {
    const auto& c = ctx_cast<CsfLayerCtx>(ctx, name());
    CsfGrads g = csf_unsup_grads(c.csf, dict);
    LayerGrads out;
    out.grad_input = std::move(g.grad_input);
    out.params.push_back(std::move(g.grad_dict));
    return out;
}

} // namespace sfnn
