#pragma once

#include <cstdint>

#include "rlalloc/nn/tensor.hpp"

namespace rlalloc::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    TensorMap m;
    TensorMap v;
    std::uint64_t step_count = 0;
};

enum class Direction { Descent, Ascent };

/// One bias-corrected Adam step. Moment buffers are created lazily on the
/// first call. Every gradient must match its parameter's shape, and every
/// parameter must have a gradient.
void adam_update(TensorMap& params, const TensorMap& grads, AdamState& state, double learning_rate,
                 Direction direction = Direction::Descent, const AdamConfig& config = {});

/// Global L2 norm over every tensor in the map.
double global_norm(const TensorMap& tensors);

}  // namespace rlalloc::nn
