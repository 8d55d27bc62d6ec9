#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sfnn/layers.hpp"

namespace sfnn {

/// Sequential layer chain with a named parameter registry. The softmax
/// log-loss is applied by the loss functions below, not stored as a layer,
/// so layer counts match the usual convention (a 7-layer baseline).
class Network {
public:
    explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

    void add(std::unique_ptr<Layer> layer);

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    const Shape& input_shape() const { return input_shape_; }
    Shape output_shape() const;

    /// Registry entry: "layername.label" plus where the tensor lives.
    struct ParamEntry {
        std::string name;
        std::size_t layer_index;
        std::size_t slot;
    };
    const std::vector<ParamEntry>& param_entries() const { return entries_; }
    std::vector<Tensor*> param_tensors();
    std::vector<const Tensor*> param_tensors() const;
    std::size_t total_param_count() const;

    /// Hash of layer kinds and parameter/activation shapes; changes whenever
    /// the topology changes, so checkpoints can refuse mismatched loads.
    std::uint64_t fingerprint() const;

    /// Per-layer parameter count table, for the build report.
    std::string report() const;

private:
    Shape input_shape_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<ParamEntry> entries_;
};

/// Per-sample forward state: one context per layer.
struct NetPass {
    std::vector<std::unique_ptr<LayerCtx>> ctxs;
};

/// Runs the chain and returns the logits.
Tensor net_forward(const Network& net, const Tensor& x, NetPass& pass);

/// Numerically stable softmax log-loss; fills grad_logits when non-null.
double softmax_loss(const Tensor& logits, std::size_t label, Tensor* grad_logits);

/// Forward plus loss, no gradient bookkeeping kept beyond the pass.
double net_loss(const Network& net, const Tensor& x, std::size_t label);

/// Backward through the chain, accumulating (+=) parameter gradients into
/// `grads` (aligned with param_tensors(); caller sizes and zeroes them).
///
/// mu weighs the reconstruction objective of every dictionary layer: at each
/// such layer both the dictionary gradient and the downward activation
/// gradient become (1-mu) * supervised + mu * unsupervised. mu = 0 takes the
/// purely supervised code path.
void net_backward(const Network& net, const NetPass& pass, const Tensor& grad_logits, double mu,
                  std::vector<Tensor>& grads);

/// Summed reconstruction loss over the dictionary layers of a completed pass.
double net_unsup_loss(const Network& net, const NetPass& pass);

/// Backward pass of the summed reconstruction loss alone (no label needed),
/// accumulating into `grads` like net_backward. Layers above the topmost
/// dictionary layer receive nothing; everything below gets the chained
/// gradient. Used when the reconstruction term is fed from unlabeled data.
void net_unsup_backward(const Network& net, const NetPass& pass, std::vector<Tensor>& grads);

/// Topology description for the built-in variants and custom chains.
struct TopologySpec {
    std::string variant = "lenet"; // lenet | csf | sf | csf_sf | custom
    std::vector<std::string> custom_layers; // used when variant == "custom"

    Shape input_shape = {28, 28, 1};
    std::size_t classes = 10;

    // Built-in variant widths (the curtailed-LeNet family).
    std::size_t conv1_channels = 20;
    std::size_t conv2_channels = 50;
    std::size_t hidden = 500;
    std::size_t window = 5; // conv/csf patch extent
    std::size_t pool = 2;

    ElasticNetParams en; // applied to every sf/csf layer
    std::uint64_t seed = 1;
};

/// Builds one of the four named variants or a custom chain.
///
/// The named variants keep the replaced pairs parameter-exact: the first
/// conv and the first linear layer carry no bias in any variant, so a csf
/// dictionary (h_Q*w_Q*c x K) matches conv1's weight tensor and an sf
/// dictionary (m x K) matches linear1's weight matrix entry for entry.
///
/// Custom chain tokens: "conv:HxK" (H x H window, K channels, bias),
/// "conv_nobias:HxK", "maxpool:W", "relu", "linear:N" / "linear_nobias:N",
/// "sf:K", "csf:HxK".
Network build_network(const TopologySpec& spec);

} // namespace sfnn
