#include "rlalloc/nn/checkpoint.hpp"

#include <fstream>

#include "rlalloc/errors.hpp"

namespace rlalloc::nn {

nlohmann::json parameters_to_json(const TensorMap& params) {
    nlohmann::json j;
    j["format_version"] = kCheckpointFormatVersion;
    auto& out = j["parameters"] = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        out[name] = {{"shape", t.shape()}, {"values", t.storage()}};
    }
    return j;
}

TensorMap parameters_from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointFormatVersion) {
        throw DataError("unsupported checkpoint format version");
    }
    TensorMap params;
    for (const auto& [name, entry] : j.at("parameters").items()) {
        params.emplace(name, Tensor(entry.at("shape").get<Shape>(), entry.at("values").get<std::vector<double>>()));
    }
    return params;
}

void save_parameters(const TensorMap& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << parameters_to_json(params).dump(1) << '\n';
}

TensorMap load_parameters(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    return parameters_from_json(nlohmann::json::parse(in));
}

}  // namespace rlalloc::nn
