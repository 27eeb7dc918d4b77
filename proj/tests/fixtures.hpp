#pragma once

// Small networks and clouds shared by the test binaries.

#include "gradient_oracle.hpp"
#include "pcnst/network.hpp"

#include <cstdint>
#include <random>

namespace pcnst::testing {

inline NetworkConfig small_config(Fusion fusion = Fusion::late, LayerKind kind = LayerKind::fel) {
    NetworkConfig c;
    c.layer_widths = {5, 6, 7, 8};
    c.head_widths = {6, 5};
    c.class_count = 3;
    c.fusion = fusion;
    c.layer_kind = kind;
    return c;
}

// Running statistics that differ from the identity, so the inference fold is exercised.
inline void randomize_stats(NetworkParams& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto touch = [&](Matrix& bias, BatchNormState& s, Matrix& gamma, Matrix& beta) {
        bias = random_matrix(1, bias.cols(), rng, -0.2, 0.2);
        s.running_mean = random_matrix(1, s.running_mean.cols(), rng, -0.5, 0.5);
        s.running_var = random_matrix(1, s.running_var.cols(), rng, 0.5, 2.0);
        gamma = random_matrix(1, gamma.cols(), rng, 0.5, 1.5);
        beta = random_matrix(1, beta.cols(), rng, -0.3, 0.3);
    };
    for (auto& route : params.routes) {
        for (auto& l : route.layers) {
            touch(l.bias, l.stats, l.gamma, l.beta);
        }
    }
    for (auto& d : params.head) {
        if (d.batch_norm) {
            touch(d.bias, d.stats, d.gamma, d.beta);
        }
    }
}

inline ColoredPointCloud random_normalized_cloud(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ColoredPointCloud::from_normalized(random_matrix(n, 3, rng), random_matrix(n, 3, rng),
                                              {});
}

}  // namespace pcnst::testing
