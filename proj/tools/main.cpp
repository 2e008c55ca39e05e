#include <algorithm>
#include <exception>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rlalloc/cli.hpp"
#include "rlalloc/errors.hpp"

using namespace rlalloc;

int main(int argc, char** argv) {
    CLI::App app{"Portfolio allocation: deep policy-gradient agents and classical allocators"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> strategies;
    std::optional<double> cost_bps;

    for (const char* name : {"ingest", "train", "backtest", "compare", "report"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_option("--out", out, "overrides the output directory");
        sub->add_option("--strategies", strategies, "comma list, e.g. equal_weight,cnn");
        sub->add_option("--cost-bps", cost_bps, "proportional cost in basis points")->check(CLI::NonNegativeNumber);
    }

    CLI11_PARSE(app, argc, argv);
    const auto command = *cli::parse_command(app.get_subcommands().front()->get_name());

    try {
        cli::RunConfig config = cli::load_config(config_path);
        if (seed) config.seed = *seed;
        if (out) config.out = *out;
        if (cost_bps) config.cost_rate = *cost_bps / 10000.0;
        if (strategies) {
            config.strategies.clear();
            std::istringstream in(*strategies);
            for (std::string s; std::getline(in, s, ',');)
                if (!s.empty()) config.strategies.push_back(s);
            // Narrowing the selection drops overrides of strategies left out.
            std::erase_if(config.overrides, [&](const auto& kv) {
                return std::find(config.strategies.begin(), config.strategies.end(), kv.first) == config.strategies.end();
            });
        }
        cli::run(command, config, std::cout);
    } catch (const ValidationError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
