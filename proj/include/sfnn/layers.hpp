#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sfnn/csf_layer.hpp"
#include "sfnn/rng.hpp"
#include "sfnn/sf_layer.hpp"
#include "sfnn/tensor.hpp"

namespace sfnn {

/// Per-sample state a layer carries from forward to backward. Concrete
/// layers subclass this with whatever their backward needs.
struct LayerCtx {
    virtual ~LayerCtx() = default;
};

struct LayerGrads {
    Tensor grad_input;
    std::vector<Tensor> params; // aligned with param_tensors() order
};

/// A network layer. Forward/backward are const so a frozen network can be
/// shared across threads, with all mutable per-sample state in the ctx.
class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    const std::string& name() const { return name_; }
    virtual std::string kind() const = 0;

    /// Validates the input shape and reports the output shape.
    virtual Shape output_shape(const Shape& input) const = 0;

    virtual Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const = 0;
    virtual LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const = 0;

    virtual std::vector<Tensor*> param_tensors() { return {}; }
    virtual std::vector<const Tensor*> param_tensors() const { return {}; }
    virtual std::vector<std::string> param_labels() const { return {}; }

    /// Dictionary-bearing layers (sparse factorization) override these.
    virtual bool has_dictionary() const { return false; }
    virtual void renormalize_dictionary() {}
    virtual double unsup_loss_value(const LayerCtx&) const {
        throw Error(name_ + ": layer has no reconstruction objective");
    }
    virtual LayerGrads unsup_gradients(const LayerCtx&) const {
        throw Error(name_ + ": layer has no reconstruction objective");
    }

private:
    std::string name_;
};

/// Valid-extent cross-correlation with optional per-channel bias. Weights
/// are stored h_Q x w_Q x in_c x out_c, matching the patch vectorization
/// order, so flattening the first three axes gives the m x K matrix view.
class ConvLayer : public Layer {
public:
    ConvLayer(std::string name, std::size_t h_Q, std::size_t w_Q, std::size_t in_c,
              std::size_t out_c, bool with_bias, Rng& rng);

    std::string kind() const override { return "conv"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;
    std::vector<Tensor*> param_tensors() override;
    std::vector<const Tensor*> param_tensors() const override;
    std::vector<std::string> param_labels() const override;

    Tensor weights; // h_Q x w_Q x in_c x out_c
    Tensor bias;    // out_c, empty when bias-free

private:
    std::size_t h_Q_, w_Q_, in_c_, out_c_;
    bool with_bias_;
};

/// a = W x (+ bias). Accepts any input rank; the input is read in row-major
/// flattened order and the input gradient is returned in the input's shape.
class LinearLayer : public Layer {
public:
    LinearLayer(std::string name, std::size_t in_dim, std::size_t out_dim, bool with_bias,
                Rng& rng);

    std::string kind() const override { return "linear"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;
    std::vector<Tensor*> param_tensors() override;
    std::vector<const Tensor*> param_tensors() const override;
    std::vector<std::string> param_labels() const override;

    Tensor weights; // out_dim x in_dim
    Tensor bias;    // out_dim, empty when bias-free

private:
    std::size_t in_dim_, out_dim_;
    bool with_bias_;
};

class ReluLayer : public Layer {
public:
    explicit ReluLayer(std::string name) : Layer(std::move(name)) {}
    std::string kind() const override { return "relu"; }
    Shape output_shape(const Shape& input) const override { return input; }
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;
};

/// Non-overlapping window maximum (stride = window), floor extent, with
/// argmax routing in backward.
class MaxPoolLayer : public Layer {
public:
    MaxPoolLayer(std::string name, std::size_t window)
        : Layer(std::move(name)), window_(window) {}
    std::string kind() const override { return "maxpool"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;

private:
    std::size_t window_;
};

/// Sparse factorization of the flattened input vector; the activation is the
/// code itself (signed — no rectifier belongs after this layer).
class SfLayer : public Layer {
public:
    SfLayer(std::string name, std::size_t in_dim, std::size_t atoms, ElasticNetParams params,
            Rng& rng);

    std::string kind() const override { return "sf"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;
    std::vector<Tensor*> param_tensors() override;
    std::vector<const Tensor*> param_tensors() const override;
    std::vector<std::string> param_labels() const override;
    bool has_dictionary() const override { return true; }
    void renormalize_dictionary() override { renormalize(dict); }
    double unsup_loss_value(const LayerCtx& ctx) const override;
    LayerGrads unsup_gradients(const LayerCtx& ctx) const override;

    Dictionary dict;
    ElasticNetParams en_params;

private:
    std::size_t in_dim_, atoms_;
};

/// Patch-wise sparse factorization over the image (stride 1, valid extent).
class CsfLayer : public Layer {
public:
    CsfLayer(std::string name, std::size_t h_Q, std::size_t w_Q, std::size_t in_c,
             std::size_t atoms, ElasticNetParams params, Rng& rng);

    std::string kind() const override { return "csf"; }
    Shape output_shape(const Shape& input) const override;
    Tensor forward(const Tensor& input, std::unique_ptr<LayerCtx>& ctx) const override;
    LayerGrads backward(const LayerCtx& ctx, const Tensor& grad_output) const override;
    std::vector<Tensor*> param_tensors() override;
    std::vector<const Tensor*> param_tensors() const override;
    std::vector<std::string> param_labels() const override;
    bool has_dictionary() const override { return true; }
    void renormalize_dictionary() override { renormalize(dict); }
    double unsup_loss_value(const LayerCtx& ctx) const override;
    LayerGrads unsup_gradients(const LayerCtx& ctx) const override;

    Dictionary dict; // (h_Q * w_Q * in_c) x atoms
    ElasticNetParams en_params;

private:
    PatchGeometry geometry_for(const Shape& input) const;
    std::size_t h_Q_, w_Q_, in_c_, atoms_;
};

} // namespace sfnn
