#pragma once

#include <filesystem>

#include <json.hpp>

#include "rlalloc/nn/tensor.hpp"

namespace rlalloc::nn {

inline constexpr int kCheckpointFormatVersion = 1;

/// {"format_version": 1, "parameters": {name: {"shape": [...], "values": [...]}}}
/// Doubles are written in shortest round-trip form, so load(save(x)) == x bitwise.
nlohmann::json parameters_to_json(const TensorMap& params);
TensorMap parameters_from_json(const nlohmann::json& j);

void save_parameters(const TensorMap& params, const std::filesystem::path& path);
TensorMap load_parameters(const std::filesystem::path& path);

}  // namespace rlalloc::nn
