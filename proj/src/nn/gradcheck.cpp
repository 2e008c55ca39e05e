#include "rlalloc/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rlalloc/errors.hpp"

namespace rlalloc::nn {

GradCheckReport finite_difference_check(Graph& graph, const TensorMap& inputs, const GradCheckOptions& options) {
    if (!(options.step > 0.0)) throw ArgumentError("finite-difference step must be positive");
    graph.forward(inputs, options.forward);
    const TensorMap analytic = graph.backward();

    std::vector<std::string> names = options.wrt.empty() ? graph.input_names() : options.wrt;
    TensorMap probe = inputs;
    GradCheckReport report;
    for (const auto& name : names) {
        auto it = probe.find(name);
        if (it == probe.end()) throw ArgumentError("gradient check: input '" + name + "' not bound");
        Tensor& x = it->second;
        const Tensor& g = analytic.at(name);
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double orig = x[k];
            x[k] = orig + options.step;
            const double f_plus = graph.forward(probe, options.forward).item();
            const auto sig_plus = graph.relu_signature();
            x[k] = orig - options.step;
            const double f_minus = graph.forward(probe, options.forward).item();
            const auto sig_minus = graph.relu_signature();
            x[k] = orig;
            if (sig_plus != sig_minus) {
                report.excluded.push_back({name, k});
                continue;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * options.step);
            const double denom = std::max({std::abs(numeric), std::abs(g[k]), options.scale_floor});
            const double rel = std::abs(numeric - g[k]) / denom;
            ++report.checked;
            if (!(rel <= report.max_relative_error)) {
                report.max_relative_error = std::isnan(rel) ? INFINITY : rel;
                report.worst = {name, k};
            }
        }
    }
    graph.forward(inputs, options.forward);
    return report;
}

}  // namespace rlalloc::nn
