#include "rlalloc/nn/adam.hpp"

#include <cmath>

#include "rlalloc/errors.hpp"

namespace rlalloc::nn {

void adam_update(TensorMap& params, const TensorMap& grads, AdamState& state, double learning_rate,
                 Direction direction, const AdamConfig& config) {
    if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be non-negative");
    for (const auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw ArgumentError("no gradient for parameter '" + name + "'");
        if (g->second.shape() != p.shape()) {
            throw ArgumentError("gradient for '" + name + "' has shape " + shape_string(g->second.shape()) +
                                ", parameter has " + shape_string(p.shape()));
        }
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correct1 = 1.0 - std::pow(config.beta1, t);
    const double correct2 = 1.0 - std::pow(config.beta2, t);
    const double sign = direction == Direction::Ascent ? 1.0 : -1.0;
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        auto [mit, m_new] = state.m.try_emplace(name, p.shape(), 0.0);
        auto [vit, v_new] = state.v.try_emplace(name, p.shape(), 0.0);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        if (m.shape() != p.shape() || v.shape() != p.shape()) {
            throw ArgumentError("optimizer state for '" + name + "' does not match parameter shape");
        }
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correct1;
            const double v_hat = v[k] / correct2;
            p[k] += sign * learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

double global_norm(const TensorMap& tensors) {
    double acc = 0.0;
    for (const auto& [_, t] : tensors)
        for (double v : t.data()) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace rlalloc::nn
