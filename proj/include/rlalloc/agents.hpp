#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rlalloc/market_data.hpp"
#include "rlalloc/nn/graph.hpp"
#include "rlalloc/weights.hpp"

namespace rlalloc::agents {

// ---------------------------------------------------------------------------
// Portfolio vector memory

/// Time-indexed store of the weight vectors a policy has emitted. Reads
/// never see index t itself, and any index that was never written (including
/// everything before the first write) reads as the uniform vector.
class PortfolioVectorMemory {
public:
    static constexpr std::size_t kDefaultTail = 20;

    explicit PortfolioVectorMemory(std::size_t n_assets, std::size_t tail_length = kDefaultTail);

    std::size_t n_assets() const noexcept { return n_assets_; }
    std::size_t tail_length() const noexcept { return tail_length_; }

    /// The `tail_length` vectors at t - tail_length ... t - 1, oldest first.
    std::vector<WeightVector> read(std::size_t t) const;
    /// Stored vector at t, or uniform.
    WeightVector at(std::size_t t) const;

    void write(std::size_t t, WeightVector w);
    void write(std::size_t t, std::vector<double> w) { write(t, WeightVector(std::move(w))); }
    void reset() { store_.clear(); }

private:
    std::size_t n_assets_;
    std::size_t tail_length_;
    std::map<std::size_t, WeightVector> store_;
};

// ---------------------------------------------------------------------------
// Policies

enum class PolicyKind { CNN, RNN, LSTM };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

struct PolicyOptions {
    std::size_t window = market::kDefaultWindow;
    std::size_t units = 20;          // recurrent hidden units
    std::size_t conv_maps = 2;       // CNN first-layer feature maps
    std::size_t feature_maps = 20;   // CNN second-layer feature maps
    double dropout = 0.1;            // recurrent kinds only
    std::size_t pvm_tail = PortfolioVectorMemory::kDefaultTail;
    bool use_pvm = true;             // false = no weight-control ablation
};

/// Architecture plus parameters. Parameters are shared across assets, so the
/// network is equivariant under permutations of the asset axis.
struct PolicySpec {
    PolicyKind kind = PolicyKind::CNN;
    std::size_t n_assets = 0;
    std::uint64_t seed = 0;
    PolicyOptions options;
    nn::TensorMap parameters;
};

/// Glorot-uniform weights, zero biases (LSTM forget gate bias 1).
PolicySpec init_policy(PolicyKind kind, std::size_t n_assets, std::uint64_t seed,
                       const PolicyOptions& options = {});

std::size_t parameter_count(const PolicySpec& spec);

/// Appends the policy for `batch` stacked samples to `graph` and returns the
/// (batch x n_assets) weight node. Parameters become graph inputs named as in
/// spec.parameters; the data inputs are "state" and (with PVM) "pvm".
nn::Node build_policy_graph(nn::Graph& graph, const PolicySpec& spec, std::size_t batch);

/// Adds the "state"/"pvm" tensors for a batch, plus every parameter, to `inputs`.
void bind_policy_inputs(const PolicySpec& spec, std::span<const market::PriceTensor> states,
                        std::span<const std::vector<WeightVector>> tails, nn::TensorMap& inputs);

/// Single-sample forward pass with a graph cached across calls.
class PolicyRunner {
public:
    explicit PolicyRunner(PolicySpec spec);

    WeightVector operator()(const market::PriceTensor& state, const std::vector<WeightVector>& tail,
                            bool train_mode = false, std::uint64_t seed = 0);

    const PolicySpec& spec() const noexcept { return spec_; }

private:
    PolicySpec spec_;
    nn::Graph graph_;
    nn::TensorMap inputs_;
};

WeightVector policy_forward(const PolicySpec& spec, const market::PriceTensor& state,
                            const std::vector<WeightVector>& tail, bool train_mode = false,
                            std::uint64_t seed = 0);

// Checkpoints: numerics parameter map plus an architecture header.
nlohmann::json policy_to_json(const PolicySpec& spec);
PolicySpec policy_from_json(const nlohmann::json& j);
void save_policy(const PolicySpec& spec, const std::filesystem::path& path);
PolicySpec load_policy(const std::filesystem::path& path);

}  // namespace rlalloc::agents
