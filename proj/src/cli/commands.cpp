#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "rlalloc/cli.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Files written by the running command; removed again unless committed.
class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
        if (!fs::exists(dir_)) {
            fs::create_directories(dir_);
            created_dir_ = true;
        }
    }
    Artifacts(const Artifacts&) = delete;
    Artifacts& operator=(const Artifacts&) = delete;

    ~Artifacts() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : created_) fs::remove_all(p, ec);
        if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    }

    void write(const std::string& name, const std::string& bytes) {
        const fs::path p = dir_ / name;
        created_.push_back(p);
        std::ofstream out(p, std::ios::binary);
        out << bytes;
        if (!out.flush()) throw DataError("cannot write " + p.string());
        hashes_[name] = git_blob_sha1(bytes);
    }

    void track(const fs::path& p) { created_.push_back(p); }
    void commit() { committed_ = true; }

    const fs::path& dir() const { return dir_; }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

private:
    fs::path dir_;
    bool created_dir_ = false;
    bool committed_ = false;
    std::vector<fs::path> created_;
    std::map<std::string, std::string> hashes_;
};

json read_manifest(const fs::path& dir, const std::string& hash) {
    const fs::path p = dir / "manifest.json";
    if (!fs::exists(p)) return json();
    try {
        json m = json::parse(read_file(p));
        if (m.value("config_hash", "") == hash) return m;
    } catch (const json::exception&) {
    }
    return json();
}

struct Context {
    const RunConfig& config;
    std::ostream& log;
    std::string hash;
    std::string data_hash;
    market::PriceSeries source;
    market::PriceSeries data;  // source plus cash when configured
    json manifest;
    Artifacts artifacts;

    Context(const RunConfig& c, std::ostream& l, market::PriceSeries s, std::string h, std::string dh, json m)
        : config(c), log(l), hash(std::move(h)), data_hash(std::move(dh)), source(s),
          data(c.include_cash ? s.with_cash() : s), manifest(std::move(m)), artifacts(c.out) {}

    std::pair<market::PriceSeries, market::PriceSeries> split() const {
        return market::split_train_test(data, config.train_fraction, config.window);
    }

    void finish(const std::string& command, json summary) {
        json m = manifest.is_object() ? manifest : json::object();
        m["config"] = config_to_json(config);
        m["config_hash"] = hash;
        m["seed"] = config.seed;
        m["data_hash"] = data_hash;
        m["commands"][command] = std::move(summary);
        for (const auto& [name, h] : artifacts.hashes()) m["artifacts"][name] = h;
        artifacts.write("manifest.json", m.dump(2) + "\n");
        artifacts.commit();
    }
};

Context open_context(const RunConfig& c, std::ostream& log) {
    const std::string hash = config_hash(c);
    json manifest = read_manifest(c.out, hash);
    const fs::path cache = c.out / "dataset.csv";
    const bool cached = fs::exists(cache) && manifest.is_object() && manifest.contains("commands") &&
                        manifest["commands"].contains("ingest");
    market::PriceSeries series = [&] {
        if (!cached) return load_source(c);
        market::IngestOptions opt;
        opt.max_fill_fraction = 1.0;
        return market::ingest_ohlc(cache, opt);
    }();
    const std::string data_hash = git_blob_sha1(canonical_csv(series));
    if (cached && manifest.value("data_hash", "") != data_hash)
        throw DataError("cached dataset " + cache.string() + " does not match its manifest");
    return Context(c, log, std::move(series), hash, data_hash, std::move(manifest));
}

ordered_json metrics_row(const std::string& strategy, const backtest::Metrics& m) {
    ordered_json r;
    r["strategy"] = strategy;
    r["total_return"] = m.total_return;
    r["sharpe_ratio"] = m.sharpe ? ordered_json(*m.sharpe) : ordered_json(nullptr);
    r["max_drawdown"] = m.max_drawdown;
    r["daily_turnover"] = m.daily_turnover;
    return r;
}

void print_table(std::ostream& log, const std::vector<std::pair<std::string, backtest::Metrics>>& rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %14s %14s %14s %14s\n", "strategy", "total_return", "sharpe_ratio",
                  "max_drawdown", "daily_turnover");
    log << line;
    for (const auto& [name, m] : rows) {
        char sharpe[32] = "n/a";
        if (m.sharpe) std::snprintf(sharpe, sizeof sharpe, "%.4f", *m.sharpe);
        std::snprintf(line, sizeof line, "%-14s %14.4f %14s %14.4f %14.4f\n", name.c_str(), m.total_return, sharpe,
                      m.max_drawdown, m.daily_turnover);
        log << line;
    }
}

struct TrainedPolicy {
    agents::PolicySpec spec;
    json summary;
};

TrainedPolicy train_agent(Context& ctx, const std::string& strategy) {
    const auto tc = train_config(ctx.config, strategy);
    if (tc.checkpoint_dir) {
        if (!fs::exists(*tc.checkpoint_dir)) ctx.artifacts.track(*tc.checkpoint_dir);
        fs::create_directories(*tc.checkpoint_dir);
    }
    const auto train_seg = ctx.split().first;
    ctx.log << strategy << ": training " << tc.steps << " steps on " << train_seg.num_dates() << " dates\n";
    const auto result = train::train_policy(tc, train_seg);
    const auto& h = result.history;
    if (h.aborted) throw DataError(strategy + ": training aborted, " + h.abort_reason);

    json policy;
    policy["config_hash"] = ctx.hash;
    policy["policy"] = agents::policy_to_json(result.spec);
    ctx.artifacts.write("policy_" + strategy + ".json", policy.dump(1) + "\n");

    std::ostringstream csv;
    csv << "step,batch_reward,parameter_norm\n";
    for (std::size_t k = 0; k < h.completed(); ++k)
        csv << k + 1 << ',' << (std::isnan(h.batch_reward[k]) ? "" : backtest::format_double(h.batch_reward[k]))
            << ',' << backtest::format_double(h.parameter_norm[k]) << '\n';
    ctx.artifacts.write("train_history_" + strategy + ".csv", csv.str());

    json summary;
    summary["steps"] = h.completed();
    summary["skipped_steps"] = h.skipped_steps.size();
    summary["learning_rate"] = tc.lr();
    double tail = 0.0;
    std::size_t n = 0;
    for (std::size_t k = h.completed() > 100 ? h.completed() - 100 : 0; k < h.completed(); ++k)
        if (!std::isnan(h.batch_reward[k])) {
            tail += h.batch_reward[k];
            ++n;
        }
    summary["final_batch_reward"] = n ? json(tail / static_cast<double>(n)) : json(nullptr);
    return {result.spec, summary};
}

agents::PolicySpec obtain_policy(Context& ctx, const std::string& strategy, json& summary) {
    const fs::path p = ctx.config.out / ("policy_" + strategy + ".json");
    if (fs::exists(p)) {
        const json j = json::parse(read_file(p));
        if (j.value("config_hash", "") == ctx.hash) {
            ctx.log << strategy << ": using trained policy " << p.string() << "\n";
            return agents::policy_from_json(j.at("policy"));
        }
    }
    auto trained = train_agent(ctx, strategy);
    summary["training"][strategy] = trained.summary;
    return trained.spec;
}

backtest::Strategy strategy_for(Context& ctx, const std::string& name, json& summary) {
    if (is_agent(name)) return train::policy_strategy(obtain_policy(ctx, name, summary));
    return allocator_strategy(*alloc::parse_allocator_kind(name), allocator_options(ctx.config, name));
}

backtest::Metrics backtest_one(Context& ctx, const std::string& name, const market::PriceSeries& test, json& summary) {
    const auto strategy = strategy_for(ctx, name, summary);
    const auto result = backtest::run_backtest(strategy, test, backtest::CostModel(ctx.config.cost_rate), ctx.config.window);
    std::ostringstream curve, weights;
    backtest::write_curve_csv(result, curve);
    backtest::write_weights_csv(result, weights);
    ctx.artifacts.write("curve_" + name + ".csv", curve.str());
    ctx.artifacts.write("weights_" + name + ".csv", weights.str());
    json r = backtest::result_to_json(result, name, ctx.hash);
    r["data_hash"] = ctx.data_hash;
    ctx.artifacts.write("result_" + name + ".json", r.dump(2) + "\n");
    return backtest::compute_metrics(result);
}

void write_metrics(Context& ctx, const market::PriceSeries& test,
                   const std::vector<std::pair<std::string, backtest::Metrics>>& rows) {
    ordered_json m;
    m["config_hash"] = ctx.hash;
    m["data_hash"] = ctx.data_hash;
    m["cost_rate"] = ctx.config.cost_rate;
    m["test_start"] = market::format_date(test.date(std::max(test.warmup(), ctx.config.window)));
    m["test_end"] = market::format_date(test.date(test.num_dates() - 1));
    m["columns"] = {"total_return", "sharpe_ratio", "max_drawdown", "daily_turnover"};
    m["rows"] = ordered_json::array();
    for (const auto& [name, metrics] : rows) m["rows"].push_back(metrics_row(name, metrics));
    ctx.artifacts.write("metrics.json", m.dump(2) + "\n");
    print_table(ctx.log, rows);
}

void cmd_ingest(Context& ctx) {
    const auto& plain = ctx.source;
    ctx.artifacts.write("dataset.csv", canonical_csv(plain));
    json s;
    s["tickers"] = plain.tickers();
    s["dates"] = plain.num_dates();
    s["start"] = market::format_date(plain.date(0));
    s["end"] = market::format_date(plain.date(plain.num_dates() - 1));
    ctx.log << "ingested " << plain.num_assets() << " assets over " << plain.num_dates() << " dates, data hash "
            << ctx.data_hash << "\n";
    ctx.finish("ingest", s);
}

void cmd_train(Context& ctx) {
    json s = json::object();
    std::size_t agents_seen = 0;
    const auto test = ctx.split().second;
    for (const auto& name : ctx.config.strategies) {
        if (!is_agent(name)) continue;
        ++agents_seen;
        auto trained = train_agent(ctx, name);
        const auto r = train::evaluate(trained.spec, test, backtest::CostModel(ctx.config.cost_rate));
        trained.summary["test_metrics"] = backtest::metrics_to_json(backtest::compute_metrics(r));
        s[name] = trained.summary;
        ctx.log << name << ": done, test total return "
                << backtest::format_double(backtest::compute_metrics(r).total_return) << "%\n";
    }
    if (agents_seen == 0) throw ValidationError("strategies: train needs at least one of cnn, rnn, lstm");
    ctx.finish("train", s);
}

void cmd_backtest(Context& ctx) {
    if (ctx.config.strategies.size() != 1)
        throw ValidationError("strategies: backtest runs exactly one strategy, got " +
                              std::to_string(ctx.config.strategies.size()));
    const auto test = ctx.split().second;
    json s = json::object();
    const auto& name = ctx.config.strategies.front();
    const auto m = backtest_one(ctx, name, test, s);
    write_metrics(ctx, test, {{name, m}});
    s["strategy"] = name;
    ctx.finish("backtest", s);
}

void cmd_compare(Context& ctx) {
    const auto test = ctx.split().second;
    json s = json::object();
    std::vector<std::pair<std::string, backtest::Metrics>> rows;
    for (const auto& name : ctx.config.strategies) rows.emplace_back(name, backtest_one(ctx, name, test, s));
    write_metrics(ctx, test, rows);
    s["strategies"] = ctx.config.strategies;
    ctx.finish("compare", s);
}

void cmd_report(Context& ctx) {
    const auto& c = ctx.config;
    if (!ctx.manifest.is_object())
        throw DataError("report: no manifest in " + c.out.string() + " matches config hash " + ctx.hash);
    const json& recorded = ctx.manifest.contains("artifacts") ? ctx.manifest["artifacts"] : json::object();
    auto verified = [&](const std::string& name) {
        const fs::path p = c.out / name;
        if (!fs::exists(p)) throw DataError("report: missing " + p.string());
        std::string bytes = read_file(p);
        if (recorded.value(name, "") != git_blob_sha1(bytes))
            throw DataError("report: " + name + " does not match the manifest");
        return bytes;
    };

    std::vector<std::string> dates;
    std::vector<std::vector<std::string>> values;
    std::ostringstream metrics;
    metrics << "strategy,total_return,sharpe_ratio,max_drawdown,daily_turnover\n";
    for (const auto& name : c.strategies) {
        const json r = json::parse(verified("result_" + name + ".json"));
        if (r.value("config_hash", "") != ctx.hash) throw DataError("report: result_" + name + ".json has a different config hash");
        const json& m = r.at("metrics");
        auto num = [](const json& v) { return v.is_null() ? std::string() : backtest::format_double(v.get<double>()); };
        metrics << name << ',' << num(m.at("total_return")) << ',' << num(m.at("sharpe")) << ','
                << num(m.at("max_drawdown")) << ',' << num(m.at("daily_turnover")) << '\n';

        std::istringstream curve(verified("curve_" + name + ".csv"));
        verified("weights_" + name + ".csv");
        std::string line;
        std::getline(curve, line);
        std::vector<std::string> d, v;
        while (std::getline(curve, line)) {
            const auto a = line.find(',');
            const auto b = line.find(',', a + 1);
            d.push_back(line.substr(0, a));
            v.push_back(line.substr(a + 1, b - a - 1));
        }
        if (dates.empty()) dates = d;
        if (d != dates) throw DataError("report: curve_" + name + ".csv covers different dates");
        values.push_back(std::move(v));
    }

    std::ostringstream out;
    out << "date";
    for (const auto& name : c.strategies) out << ',' << name;
    out << '\n';
    for (std::size_t k = 0; k < dates.size(); ++k) {
        out << dates[k];
        for (const auto& v : values) out << ',' << v[k];
        out << '\n';
    }
    ctx.artifacts.write("report_values.csv", out.str());
    ctx.artifacts.write("report_metrics.csv", metrics.str());
    ctx.log << "report: " << c.strategies.size() << " strategies over " << dates.size() << " dates\n";
    json s;
    s["strategies"] = c.strategies;
    ctx.finish("report", s);
}

}  // namespace

backtest::Strategy allocator_strategy(alloc::AllocatorKind kind, alloc::AllocatorOptions options) {
    return [kind, options](const backtest::DecisionContext& ctx) {
        return alloc::allocate(kind, ctx.history, ctx.t, options);
    };
}

std::optional<Command> parse_command(std::string_view s) {
    if (s == "ingest") return Command::Ingest;
    if (s == "train") return Command::Train;
    if (s == "backtest") return Command::Backtest;
    if (s == "compare") return Command::Compare;
    if (s == "report") return Command::Report;
    return std::nullopt;
}

void run(Command command, const RunConfig& c, std::ostream& log) {
    validate(c);
    Context ctx = open_context(c, log);
    switch (command) {
        case Command::Ingest: cmd_ingest(ctx); break;
        case Command::Train: cmd_train(ctx); break;
        case Command::Backtest: cmd_backtest(ctx); break;
        case Command::Compare: cmd_compare(ctx); break;
        case Command::Report: cmd_report(ctx); break;
    }
}

}  // namespace rlalloc::cli
