#pragma once

#include <cstdint>
#include <string>

#include "sfnn/network.hpp"
#include "sfnn/trainer.hpp"

namespace sfnn {

/// Everything a training run needs, parsed from flat sectioned key-value
/// text. A run is reproducible from this plus nothing else.
struct TrainConfig {
    TopologySpec topology; // carries elastic-net params and the init seed

    // [optimizer]
    double learning_rate = 0.01;
    double momentum = 0.9;
    double lr_decay = 1.0; // multiplies the rate after each epoch

    // [mu] — empty stages means step_down(epochs)
    MuSchedule mu;
    bool mu_explicit = false;
    bool semisup = true;
    bool unlabeled_pool = false; // feed reconstruction from the eval-free remainder

    // [data]
    std::string source = "synthetic"; // synthetic | idx | amat
    std::size_t synthetic_train_per_class = 60;
    std::size_t synthetic_test_per_class = 20;
    std::string train_images, train_labels, test_images, test_labels; // idx, under data dir
    std::string amat_train, amat_test;
    std::string variation = "none"; // none | rot | rand | img
    std::uint64_t variation_seed = 1;
    std::size_t subsample_per_class = 0; // 0 = keep everything
    std::uint64_t trial_seed = 1;

    // [run]
    std::size_t epochs = 0; // required
    std::size_t batch_size = 64;
    std::size_t threads = 1;
    std::uint64_t seed = 1;
    bool eval_each_epoch = true;
    std::string out_dir = ".";
};

/// Parses config text. Unknown sections/keys and malformed values are
/// ConfigErrors carrying the line number. Required keys — epochs always;
/// lambda1/lambda2 plus the dictionary width (hidden and/or conv1_channels)
/// whenever the chosen topology has dictionary layers — must be present.
TrainConfig parse_config(const std::string& text);

TrainConfig load_config(const std::string& path);

/// Canonical resolved form; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const TrainConfig& config);

} // namespace sfnn
