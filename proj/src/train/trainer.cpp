#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "rlalloc/errors.hpp"
#include "rlalloc/trainer.hpp"

namespace rlalloc::train {

using agents::PolicyKind;

double default_learning_rate(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::CNN: return 0.028;
        case PolicyKind::RNN: return 0.00028;
        case PolicyKind::LSTM: return 0.0028;
    }
    return 0.0;
}

agents::PolicyOptions TrainConfig::policy_options() const {
    agents::PolicyOptions o = policy;
    o.window = window;
    return o;
}

void TrainConfig::validate() const {
    if (!(lr() >= 0.0) || !std::isfinite(lr())) throw ArgumentError("learning_rate must be a finite value >= 0");
    if (batch_size < 1) throw ArgumentError("batch_size must be at least 1");
    if (window < 2) throw ArgumentError("window must be at least 2");
    if (!(cost_rate >= 0.0 && cost_rate < 1.0)) throw ArgumentError("cost_rate must lie in [0, 1)");
    if (!(grad_clip >= 0.0)) throw ArgumentError("grad_clip must be >= 0");
    if (checkpoint_every > 0 && !checkpoint_dir) throw ArgumentError("checkpoint_every needs a checkpoint_dir");
}

TrainRange training_range(const market::PriceSeries& series, std::size_t window) {
    const std::size_t lo = std::max(window, series.warmup());
    const std::size_t hi = series.num_dates() == 0 ? 0 : series.num_dates() - 1;
    return {lo, std::max(lo, hi)};
}

std::vector<std::size_t> sample_sequential_batch(TrainRange range, std::size_t batch_size, std::size_t step,
                                                 std::size_t stride) {
    if (batch_size == 0) throw ArgumentError("batch size must be positive");
    if (stride == 0) stride = batch_size;
    if (range.hi < range.lo || range.hi - range.lo < batch_size) {
        throw ArgumentError("training range [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
                            ") is shorter than one batch of " + std::to_string(batch_size));
    }
    const std::size_t positions = (range.hi - range.lo - batch_size) / stride + 1;
    const std::size_t start = range.lo + (step % positions) * stride;
    std::vector<std::size_t> out(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) out[k] = start + k;
    return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

bool all_finite(const nn::TensorMap& m) {
    for (const auto& [_, t] : m)
        for (double v : t.data())
            if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

Trainer::Trainer(TrainConfig config, market::PriceSeries data)
    : Trainer(config, data,
              agents::init_policy(config.kind, data.num_assets(), config.seed, config.policy_options())) {}

Trainer::Trainer(TrainConfig config, market::PriceSeries data, agents::PolicySpec initial)
    : config_(std::move(config)),
      data_(std::move(data)),
      range_(training_range(data_, config_.window)),
      spec_(std::move(initial)),
      pvm_(data_.num_assets(), spec_.options.pvm_tail) {
    config_.validate();
    if (spec_.n_assets != data_.num_assets() || spec_.options.window != config_.window) {
        throw ArgumentError("initial policy does not match the data or the configured window");
    }
    // Fails early when the range cannot hold one batch.
    sample_sequential_batch(range_, config_.batch_size, 0, config_.stride);

    const std::size_t B = config_.batch_size;
    const std::size_t n = data_.num_assets();
    weights_node_ = agents::build_policy_graph(graph_, spec_, B);
    const nn::Node y = graph_.input("batch.relatives", {B, n});
    const nn::Node prev = graph_.input("batch.previous", {B, n});
    const nn::Node gross = graph_.sum(graph_.multiply(weights_node_, y), 1);
    const nn::Node traded = graph_.sum(graph_.abs(graph_.sub(weights_node_, prev)), 1);
    bracket_node_ = graph_.sub(gross, graph_.scale(traded, config_.cost_rate));
    graph_.set_output(graph_.mean(graph_.log(bracket_node_)));
}

void Trainer::bind(const std::vector<std::size_t>& indices, BatchEvaluation& out) {
    const std::size_t B = indices.size();
    const std::size_t n = data_.num_assets();
    if (B != config_.batch_size) throw ArgumentError("batch has the wrong size");
    std::vector<market::PriceTensor> states;
    std::vector<std::vector<WeightVector>> tails;
    nn::Tensor y({B, n}), prev({B, n});
    out.previous.clear();
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t t = indices[b];
        if (t < range_.lo || t >= range_.hi) throw RangeError("batch index outside the training range");
        states.push_back(market::build_price_tensor(data_, t, config_.window));
        tails.push_back(pvm_.read(t));
        const auto y_next = market::price_relatives(data_, t + 1).y;
        const auto y_now = market::price_relatives(data_, t).y;
        const auto rolled = backtest::roll_weights(pvm_.at(t - 1), y_now).vec();
        for (std::size_t i = 0; i < n; ++i) {
            y[b * n + i] = y_next[i];
            prev[b * n + i] = rolled[i];
        }
        out.previous.push_back(rolled);
    }
    agents::bind_policy_inputs(spec_, states, tails, inputs_);
    inputs_.insert_or_assign("batch.relatives", std::move(y));
    inputs_.insert_or_assign("batch.previous", std::move(prev));
}

BatchEvaluation Trainer::evaluate_batch(const std::vector<std::size_t>& indices, bool train_mode, std::uint64_t seed,
                                        bool with_gradient) {
    BatchEvaluation out;
    bind(indices, out);
    out.objective = graph_.forward(inputs_, {train_mode, seed}).item();
    const nn::Tensor& w = graph_.value(weights_node_);
    const std::size_t n = data_.num_assets();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        out.weights.emplace_back(std::vector<double>(w.data().begin() + static_cast<std::ptrdiff_t>(b * n),
                                                     w.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * n)));
        out.brackets.push_back(graph_.value(bracket_node_)[b]);
    }
    if (with_gradient) {
        nn::TensorMap all = graph_.backward();
        for (const auto& [name, _] : spec_.parameters) out.gradients.insert_or_assign(name, std::move(all.at(name)));
    }
    return out;
}

nn::GradCheckReport Trainer::gradient_check(const std::vector<std::size_t>& indices, std::uint64_t seed,
                                            nn::GradCheckOptions options) {
    BatchEvaluation scratch;
    bind(indices, scratch);
    options.wrt.clear();
    for (const auto& [name, _] : spec_.parameters) options.wrt.push_back(name);
    options.forward = {true, seed};
    return nn::finite_difference_check(graph_, inputs_, options);
}

void Trainer::checkpoint(const agents::PolicySpec& spec, const std::string& name) const {
    if (!config_.checkpoint_dir) return;
    std::filesystem::create_directories(*config_.checkpoint_dir);
    agents::save_policy(spec, *config_.checkpoint_dir / name);
}

std::optional<double> Trainer::step() {
    const auto started = std::chrono::steady_clock::now();
    const auto indices = sample_sequential_batch(range_, config_.batch_size, step_, config_.stride);
    const std::uint64_t seed = mix(config_.seed ^ mix(step_));
    BatchEvaluation eval = evaluate_batch(indices, true, seed, true);

    std::optional<double> reported;
    bool positive = true;
    for (double b : eval.brackets) positive = positive && b > 0.0;
    if (positive && std::isfinite(eval.objective)) {
        if (config_.grad_clip > 0.0) {
            const double norm = nn::global_norm(eval.gradients);
            if (norm > config_.grad_clip) {
                for (auto& [_, g] : eval.gradients)
                    for (auto& v : g.storage()) v *= config_.grad_clip / norm;
            }
        }
        const agents::PolicySpec last_good = spec_;
        const nn::AdamState last_state = adam_;
        nn::adam_update(spec_.parameters, eval.gradients, adam_, config_.lr(), nn::Direction::Ascent);
        if (!all_finite(spec_.parameters)) {
            spec_ = last_good;
            adam_ = last_state;
            history_.aborted = true;
            history_.abort_reason = "non-finite parameters after step " + std::to_string(step_);
            checkpoint(spec_, "last_good.json");
            return std::nullopt;
        }
        for (std::size_t b = 0; b < indices.size(); ++b) pvm_.write(indices[b], eval.weights[b]);
        reported = eval.objective;
    } else {
        history_.skipped_steps.push_back(step_);
    }

    history_.batch_reward.push_back(reported.value_or(std::nan("")));
    history_.parameter_norm.push_back(nn::global_norm(spec_.parameters));
    history_.step_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    ++step_;
    if (config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) {
        char name[48];
        std::snprintf(name, sizeof name, "checkpoint_%06zu.json", step_);
        checkpoint(spec_, name);
    }
    return reported;
}

const TrainHistory& Trainer::run() {
    while (step_ < config_.steps && !history_.aborted) step();
    return history_;
}

TrainResult train_policy(const TrainConfig& config, const market::PriceSeries& data) {
    Trainer trainer(config, data);
    trainer.run();
    return {trainer.spec(), trainer.history()};
}

backtest::Strategy policy_strategy(const agents::PolicySpec& spec) {
    struct State {
        agents::PolicyRunner runner;
        agents::PortfolioVectorMemory pvm;
    };
    auto state = std::make_shared<State>(State{agents::PolicyRunner(spec),
                                               agents::PortfolioVectorMemory(spec.n_assets, spec.options.pvm_tail)});
    const std::size_t window = spec.options.window;
    return [state, window](const backtest::DecisionContext& ctx) {
        const auto tensor = market::build_price_tensor(ctx.history, ctx.t, window);
        WeightVector w = state->runner(tensor, state->pvm.read(ctx.t));
        state->pvm.write(ctx.t, w);
        return w;
    };
}

backtest::BacktestResult evaluate(const agents::PolicySpec& spec, const market::PriceSeries& data,
                                  const backtest::CostModel& cost) {
    return backtest::run_backtest(policy_strategy(spec), data, cost, spec.options.window);
}

}  // namespace rlalloc::train
