#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfnn/network.hpp"
#include "sfnn/trainer.hpp"

namespace sfnn {

/// On-disk model snapshot: "SFNN" magic, format version, topology
/// fingerprint, epoch counter, optimizer scalars, then named parameter
/// tensors and (optionally) their velocities — each tensor as name, scalar
/// width, rank, dims, and row-major little-endian doubles.
struct CheckpointData {
    std::uint32_t version = 1;
    std::uint64_t fingerprint = 0;
    std::uint64_t epoch = 0;       // epochs completed; training resumes here
    std::uint64_t master_seed = 0; // the run's RNG root (all streams derive from it)
    double learning_rate = 0.0;
    double momentum = 0.0;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> velocities; // empty before any step
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

/// Snapshot the live network + optimizer.
CheckpointData snapshot(const Network& net, const SgdState& state, std::uint64_t epoch,
                        std::uint64_t master_seed);

/// Restores parameters and optimizer state into an already-built network.
/// The checkpoint's fingerprint and parameter names must match exactly.
void restore(const CheckpointData& data, Network& net, SgdState& state);

} // namespace sfnn
