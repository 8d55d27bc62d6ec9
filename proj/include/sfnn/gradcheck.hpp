#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfnn/network.hpp"

namespace sfnn {

/// Result of one finite-difference suite: how many (support-stable, where
/// that applies) instances were checked and the worst relative error seen.
struct GradCheckReport {
    std::string kind;
    std::size_t requested = 0;
    std::size_t instances = 0;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;

    bool pass() const { return instances >= requested && max_rel_err < tolerance; }
};

/// Dictionary and input gradients of the factorization backward pass vs
/// central finite differences through a re-solved forward, on support-stable
/// random instances.
GradCheckReport check_sf_gradients(std::uint64_t seed, std::size_t instances);

/// Same for the reconstruction objective's gradients (the code is re-solved
/// at every perturbed point; the analytic side treats it as constant).
GradCheckReport check_sf_unsup_gradients(std::uint64_t seed, std::size_t instances);

/// Patch-summed dictionary gradient and overlap-added input gradient of the
/// convolutional factorization vs finite differences.
GradCheckReport check_csf_gradients(std::uint64_t seed, std::size_t instances);

/// Reconstruction-objective gradients of the convolutional factorization.
GradCheckReport check_csf_unsup_gradients(std::uint64_t seed, std::size_t instances);

/// Classic layers against finite differences (weights, bias, input).
GradCheckReport check_conv_gradients(std::uint64_t seed, std::size_t instances);
GradCheckReport check_linear_gradients(std::uint64_t seed, std::size_t instances);
GradCheckReport check_relu_gradients(std::uint64_t seed, std::size_t instances);
GradCheckReport check_maxpool_gradients(std::uint64_t seed, std::size_t instances);

/// Whole-network spot check: 20 random parameter coordinates of a small
/// build of the named variant against finite differences of the training
/// loss. Tolerance 1e-3 (deep chains accumulate roundoff).
GradCheckReport check_network_gradients(std::uint64_t seed, const std::string& variant);

/// The full battery at default sizes.
std::vector<GradCheckReport> run_all_gradchecks(std::uint64_t seed);

} // namespace sfnn
