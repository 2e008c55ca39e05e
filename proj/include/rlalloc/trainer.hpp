#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rlalloc/agents.hpp"
#include "rlalloc/backtest.hpp"
#include "rlalloc/market_data.hpp"
#include "rlalloc/nn/adam.hpp"
#include "rlalloc/nn/gradcheck.hpp"

namespace rlalloc::train {

double default_learning_rate(agents::PolicyKind kind);

struct TrainConfig {
    agents::PolicyKind kind = agents::PolicyKind::CNN;
    std::optional<double> learning_rate;  // per-kind default when empty
    std::size_t steps = 50000;
    std::size_t batch_size = 109;
    std::size_t window = market::kDefaultWindow;
    double cost_rate = backtest::kDefaultCostRate;
    std::uint64_t seed = 0;
    std::size_t stride = 0;             // 0 means batch_size
    double grad_clip = 5.0;             // global norm; 0 disables
    std::size_t checkpoint_every = 0;   // 0 disables
    std::optional<std::filesystem::path> checkpoint_dir;
    agents::PolicyOptions policy;       // window is overwritten by `window`

    double lr() const { return learning_rate.value_or(default_learning_rate(kind)); }
    agents::PolicyOptions policy_options() const;
    /// Throws ArgumentError naming the first invalid field.
    void validate() const;
};

struct TrainHistory {
    std::vector<double> batch_reward;  // NaN for skipped steps
    std::vector<double> parameter_norm;
    std::vector<double> step_seconds;
    std::vector<std::size_t> skipped_steps;
    bool aborted = false;
    std::string abort_reason;

    std::size_t completed() const { return batch_reward.size(); }
};

/// Index range [lo, hi) of decision dates usable for training on `series`.
struct TrainRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

TrainRange training_range(const market::PriceSeries& series, std::size_t window);

/// `batch_size` consecutive decision dates. Successive steps tile the range
/// in time order with the given stride and wrap back to its start.
std::vector<std::size_t> sample_sequential_batch(TrainRange range, std::size_t batch_size, std::size_t step,
                                                 std::size_t stride = 0);

struct BatchEvaluation {
    double objective = 0.0;                    // mean log cost-adjusted return
    std::vector<WeightVector> weights;         // w_t per batch index
    std::vector<std::vector<double>> previous; // rolled w_{t-1} per batch index
    std::vector<double> brackets;
    nn::TensorMap gradients;                   // parameters only; empty unless requested
};

/// Holds the differentiable batch objective for one policy and data set.
class Trainer {
public:
    Trainer(TrainConfig config, market::PriceSeries data);
    Trainer(TrainConfig config, market::PriceSeries data, agents::PolicySpec initial);

    /// Objective on `indices` without touching parameters or memory.
    BatchEvaluation evaluate_batch(const std::vector<std::size_t>& indices, bool train_mode, std::uint64_t seed,
                                   bool with_gradient = false);

    /// Central-difference check of the batch objective's parameter gradient,
    /// in train mode with the given dropout seed.
    nn::GradCheckReport gradient_check(const std::vector<std::size_t>& indices, std::uint64_t seed,
                                       nn::GradCheckOptions options = {});

    /// One ascent step on the next sequential batch. Returns the batch
    /// objective, or nullopt when the step was skipped.
    std::optional<double> step();

    /// Runs the remaining configured steps.
    const TrainHistory& run();

    const agents::PolicySpec& spec() const noexcept { return spec_; }
    const agents::PortfolioVectorMemory& memory() const noexcept { return pvm_; }
    const TrainHistory& history() const noexcept { return history_; }
    const TrainConfig& config() const noexcept { return config_; }
    TrainRange range() const noexcept { return range_; }
    std::size_t steps_done() const noexcept { return step_; }

private:
    void bind(const std::vector<std::size_t>& indices, BatchEvaluation& out);
    void checkpoint(const agents::PolicySpec& spec, const std::string& name) const;

    TrainConfig config_;
    market::PriceSeries data_;
    TrainRange range_;
    agents::PolicySpec spec_;
    agents::PortfolioVectorMemory pvm_;
    nn::AdamState adam_;
    TrainHistory history_;
    std::size_t step_ = 0;

    nn::Graph graph_;
    nn::Node weights_node_{};
    nn::Node bracket_node_{};
    nn::TensorMap inputs_;
};

struct TrainResult {
    agents::PolicySpec spec;
    TrainHistory history;
};

TrainResult train_policy(const TrainConfig& config, const market::PriceSeries& data);

/// Evaluation-mode decision rule backed by a fresh uniform memory that the
/// policy fills with its own outputs. Stateful: build one per backtest run.
backtest::Strategy policy_strategy(const agents::PolicySpec& spec);

/// Sequential evaluation-mode pass through `data` with a fresh memory that
/// the policy fills with its own outputs.
backtest::BacktestResult evaluate(const agents::PolicySpec& spec, const market::PriceSeries& data,
                                  const backtest::CostModel& cost = backtest::CostModel{});

}  // namespace rlalloc::train
