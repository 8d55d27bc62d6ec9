#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfnn/data.hpp"
#include "sfnn/network.hpp"

namespace sfnn {

/// Convex combination (1 - mu) * grad_s + mu * grad_u.
Tensor mix_gradients(const Tensor& grad_s, const Tensor& grad_u, double mu);

/// Heavy-ball optimizer state. Velocities mirror the network's parameter
/// registry and are created on the first step.
struct SgdState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<Tensor> velocities;
};

/// v <- momentum * v - lr * g; p <- p + v; dictionaries renormalized after
/// the update. A non-finite gradient aborts, naming the parameter.
void sgd_step(Network& net, const std::vector<Tensor>& grads, SgdState& state);

/// Piecewise-constant weighting of the reconstruction objective. Stage
/// iterations are consumed in order; past the last stage its value holds.
struct MuStage {
    double mu = 0.0;
    std::size_t iterations = 0;
};

struct MuSchedule {
    std::vector<MuStage> stages;

    /// The step-down default: 0.8, 0.5, 0.3, 0.0 over equal quarters of
    /// `total` (remainder on the final, purely supervised stage).
    static MuSchedule step_down(std::size_t total);

    /// mu in [0,1] everywhere, positive stage lengths, final stage mu = 0.
    void validate() const;

    double mu_at(std::size_t iteration) const;
};

struct EpochRow {
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
    double mu = 0.0;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRow> rows;
};

/// "epoch,split,loss,accuracy,mu,wall_seconds" with a header line.
void write_metrics_csv(const std::string& path, const TrainLog& log);

struct TrainOptions {
    std::size_t epochs = 0;
    std::size_t batch_size = 64;
    MuSchedule mu;                    // stage iterations count epochs
    std::uint64_t seed = 1;           // drives batch shuffling only
    std::size_t threads = 1;
    std::size_t start_epoch = 0;      // resume point; epochs counts the total
    bool semisup = true;              // false: never consult mu, pure supervised path
    const LabeledImageSet* unlabeled = nullptr; // optional pool for the reconstruction term

    /// Called after each epoch's rows are appended (checkpoint hook).
    std::function<void(std::size_t epoch, const TrainLog& log)> on_epoch;
};

/// Minibatch SGD over the labeled set. Supervised gradients are averaged
/// over the batch; when the epoch's mu is positive every dictionary layer
/// mixes in its reconstruction gradient — from the same samples by default,
/// or from `unlabeled` batches when a pool is given. Appends a "train" row
/// per epoch (plus an "eval" row when eval_set is non-null) and is
/// deterministic for a fixed seed and thread count.
TrainLog train(Network& net, SgdState& state, const LabeledImageSet& train_set,
               const LabeledImageSet* eval_set, const TrainOptions& options);

/// Mean loss, accuracy over a labeled set (forward only).
EpochRow evaluate(const Network& net, const LabeledImageSet& set, std::size_t threads = 1);

} // namespace sfnn
