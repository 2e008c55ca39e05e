#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rlalloc/allocators.hpp"
#include "rlalloc/backtest.hpp"
#include "rlalloc/market_data.hpp"
#include "rlalloc/trainer.hpp"

namespace rlalloc::cli {

inline const std::vector<std::string> kAllStrategies = {"equal_weight", "mean_variance", "risk_parity",
                                                        "min_variance", "cnn", "rnn", "lstm"};

bool is_agent(std::string_view strategy);

struct SyntheticData {
    std::size_t n_assets = 0;
    std::size_t length = 0;
    std::vector<double> drift;
    std::vector<double> vol;
    std::vector<double> corr;            // row-major; empty means identity
    std::optional<std::uint64_t> seed;   // run seed when empty
    double initial_price = 100.0;

    friend bool operator==(const SyntheticData&, const SyntheticData&) = default;
};

/// Per-strategy knobs. Allocator fields only apply to classical strategies,
/// agent fields only to cnn/rnn/lstm.
struct StrategyOverrides {
    // allocators
    std::optional<std::size_t> lookback;
    std::optional<double> mu_b;
    std::optional<double> vol_target;
    // agents
    std::optional<std::size_t> steps;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> stride;
    std::optional<double> grad_clip;
    std::optional<std::size_t> checkpoint_every;
    std::optional<std::size_t> units;
    std::optional<std::size_t> conv_maps;
    std::optional<std::size_t> feature_maps;
    std::optional<double> dropout;
    std::optional<std::size_t> pvm_tail;
    std::optional<bool> use_pvm;

    friend bool operator==(const StrategyOverrides&, const StrategyOverrides&) = default;
};

struct RunConfig {
    std::optional<std::filesystem::path> csv;   // exactly one of csv / synthetic
    std::optional<SyntheticData> synthetic;
    double max_fill_fraction = 0.10;
    std::vector<std::string> assets;            // empty keeps every ticker
    bool include_cash = false;
    double train_fraction = 0.75;
    double cost_rate = backtest::kDefaultCostRate;
    std::size_t window = market::kDefaultWindow;
    std::vector<std::string> strategies;
    std::map<std::string, StrategyOverrides> overrides;
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;

    /// Directory relative csv paths resolve against. Not part of the file.
    std::filesystem::path base_dir;

    friend bool operator==(const RunConfig& a, const RunConfig& b);
};

/// Throws ValidationError whose message starts with the offending field path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& c);

/// SHA-256 over the canonical JSON of everything except `out`.
std::string config_hash(const RunConfig& c);

std::string sha256_hex(std::string_view bytes);
/// Hash git assigns to a blob with these contents.
std::string git_blob_sha1(std::string_view bytes);

/// The series a run trades, before the optional cash column is added.
market::PriceSeries load_source(const RunConfig& c);
/// Canonical CSV bytes and their git blob hash.
std::string canonical_csv(const market::PriceSeries& s);

train::TrainConfig train_config(const RunConfig& c, const std::string& strategy);
alloc::AllocatorOptions allocator_options(const RunConfig& c, const std::string& strategy);

/// Fresh decision rule for one classical strategy.
backtest::Strategy allocator_strategy(alloc::AllocatorKind kind, alloc::AllocatorOptions options);

enum class Command { Ingest, Train, Backtest, Compare, Report };

std::optional<Command> parse_command(std::string_view s);

/// Executes one command, writing artifacts under `c.out` and a summary to
/// `log`. Files created by a failing command are removed before the error
/// propagates.
void run(Command command, const RunConfig& c, std::ostream& log);

}  // namespace rlalloc::cli
