#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rlalloc/nn/graph.hpp"

namespace rlalloc::nn {

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    double scale_floor = 1e-6;
    /// Inputs to perturb; empty means every input of the graph.
    std::vector<std::string> wrt;
    ForwardOptions forward;
};

struct GradCheckCoordinate {
    std::string input;
    std::size_t index = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    GradCheckCoordinate worst;
    std::size_t checked = 0;
    /// Coordinates whose +/- step straddles a ReLU kink.
    std::vector<GradCheckCoordinate> excluded;
};

/// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h
/// for every coordinate of the selected inputs. The graph's output must be
/// scalar. Leaves the graph evaluated at the unperturbed inputs.
GradCheckReport finite_difference_check(Graph& graph, const TensorMap& inputs,
                                        const GradCheckOptions& options = {});

}  // namespace rlalloc::nn
