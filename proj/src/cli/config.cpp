#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "rlalloc/cli.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw ValidationError(field + ": " + what);
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) fail(path.empty() ? k : path + "." + k, "unknown field");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0) fail(path, "expected a non-negative integer");
    return j.get<std::size_t>();
}

std::uint64_t get_seed(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
        fail(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> get_numbers(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<std::string> get_strings(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_string(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

const std::set<std::string> kAllocatorFields = {"lookback", "mu_b", "vol_target"};
const std::set<std::string> kAgentFields = {"steps", "batch_size", "learning_rate", "stride", "grad_clip",
                                            "checkpoint_every", "units", "conv_maps", "feature_maps",
                                            "dropout", "pvm_tail", "use_pvm"};

StrategyOverrides overrides_from_json(const json& j, const std::string& path) {
    std::set<std::string> all = kAllocatorFields;
    all.insert(kAgentFields.begin(), kAgentFields.end());
    check_keys(j, path, all);
    StrategyOverrides o;
    auto count = [&](const char* k, std::optional<std::size_t>& dst) {
        if (j.contains(k)) dst = get_count(j.at(k), join(path, k));
    };
    auto number = [&](const char* k, std::optional<double>& dst) {
        if (j.contains(k)) dst = get_number(j.at(k), join(path, k));
    };
    count("lookback", o.lookback);
    number("mu_b", o.mu_b);
    number("vol_target", o.vol_target);
    count("steps", o.steps);
    count("batch_size", o.batch_size);
    number("learning_rate", o.learning_rate);
    count("stride", o.stride);
    number("grad_clip", o.grad_clip);
    count("checkpoint_every", o.checkpoint_every);
    count("units", o.units);
    count("conv_maps", o.conv_maps);
    count("feature_maps", o.feature_maps);
    number("dropout", o.dropout);
    count("pvm_tail", o.pvm_tail);
    if (j.contains("use_pvm")) o.use_pvm = get_bool(j.at("use_pvm"), join(path, "use_pvm"));
    return o;
}

json overrides_to_json(const StrategyOverrides& o) {
    json j = json::object();
    auto put = [&](const char* k, const auto& v) {
        if (v) j[k] = *v;
    };
    put("lookback", o.lookback);
    put("mu_b", o.mu_b);
    put("vol_target", o.vol_target);
    put("steps", o.steps);
    put("batch_size", o.batch_size);
    put("learning_rate", o.learning_rate);
    put("stride", o.stride);
    put("grad_clip", o.grad_clip);
    put("checkpoint_every", o.checkpoint_every);
    put("units", o.units);
    put("conv_maps", o.conv_maps);
    put("feature_maps", o.feature_maps);
    put("dropout", o.dropout);
    put("pvm_tail", o.pvm_tail);
    put("use_pvm", o.use_pvm);
    return j;
}

std::vector<std::string> set_fields(const StrategyOverrides& o) {
    const json j = overrides_to_json(o);
    std::vector<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.push_back(it.key());
    return out;
}

std::string hex(const unsigned char* p, unsigned n) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < n; ++i) {
        s += digits[p[i] >> 4];
        s += digits[p[i] & 15];
    }
    return s;
}

std::string digest(const EVP_MD* md, std::string_view prefix, std::string_view bytes) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    const bool ok = ctx && EVP_DigestInit_ex(ctx, md, nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, prefix.data(), prefix.size()) == 1 &&
                    EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, out, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("digest computation failed");
    return hex(out, len);
}

}  // namespace

bool is_agent(std::string_view s) { return s == "cnn" || s == "rnn" || s == "lstm"; }

bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.csv == b.csv && a.synthetic == b.synthetic && a.max_fill_fraction == b.max_fill_fraction &&
           a.assets == b.assets && a.include_cash == b.include_cash && a.train_fraction == b.train_fraction &&
           a.cost_rate == b.cost_rate && a.window == b.window && a.strategies == b.strategies &&
           a.overrides == b.overrides && a.out == b.out && a.seed == b.seed;
}

RunConfig config_from_json(const json& j) {
    check_keys(j, "", {"data", "assets", "include_cash", "train_fraction", "cost_rate", "window", "strategies",
                       "overrides", "out", "seed"});
    RunConfig c;
    if (!j.contains("data")) fail("data", "missing");
    const json& d = j.at("data");
    check_keys(d, "data", {"csv", "synthetic", "max_fill_fraction"});
    if (d.contains("csv") == d.contains("synthetic")) fail("data", "set exactly one of csv or synthetic");
    if (d.contains("csv")) c.csv = get_string(d.at("csv"), "data.csv");
    if (d.contains("max_fill_fraction")) c.max_fill_fraction = get_number(d.at("max_fill_fraction"), "data.max_fill_fraction");
    if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        const std::string p = "data.synthetic";
        check_keys(s, p, {"n_assets", "length", "drift", "vol", "corr", "seed", "initial_price"});
        SyntheticData syn;
        for (const char* k : {"n_assets", "length", "drift", "vol"})
            if (!s.contains(k)) fail(join(p, k), "missing");
        syn.n_assets = get_count(s.at("n_assets"), p + ".n_assets");
        syn.length = get_count(s.at("length"), p + ".length");
        syn.drift = get_numbers(s.at("drift"), p + ".drift");
        syn.vol = get_numbers(s.at("vol"), p + ".vol");
        if (s.contains("corr")) syn.corr = get_numbers(s.at("corr"), p + ".corr");
        if (s.contains("seed")) syn.seed = get_seed(s.at("seed"), p + ".seed");
        if (s.contains("initial_price")) syn.initial_price = get_number(s.at("initial_price"), p + ".initial_price");
        c.synthetic = syn;
    }
    if (j.contains("assets")) c.assets = get_strings(j.at("assets"), "assets");
    if (j.contains("include_cash")) c.include_cash = get_bool(j.at("include_cash"), "include_cash");
    if (j.contains("train_fraction")) c.train_fraction = get_number(j.at("train_fraction"), "train_fraction");
    if (j.contains("cost_rate")) c.cost_rate = get_number(j.at("cost_rate"), "cost_rate");
    if (j.contains("window")) c.window = get_count(j.at("window"), "window");
    if (j.contains("strategies")) c.strategies = get_strings(j.at("strategies"), "strategies");
    if (j.contains("overrides")) {
        const json& o = j.at("overrides");
        if (!o.is_object()) fail("overrides", "expected an object");
        for (const auto& [name, v] : o.items()) c.overrides[name] = overrides_from_json(v, "overrides." + name);
    }
    if (j.contains("out")) c.out = get_string(j.at("out"), "out");
    if (j.contains("seed")) c.seed = get_seed(j.at("seed"), "seed");
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    json d = json::object();
    if (c.csv) d["csv"] = c.csv->generic_string();
    d["max_fill_fraction"] = c.max_fill_fraction;
    if (c.synthetic) {
        const auto& s = *c.synthetic;
        json js;
        js["n_assets"] = s.n_assets;
        js["length"] = s.length;
        js["drift"] = s.drift;
        js["vol"] = s.vol;
        if (!s.corr.empty()) js["corr"] = s.corr;
        if (s.seed) js["seed"] = *s.seed;
        js["initial_price"] = s.initial_price;
        d["synthetic"] = js;
    }
    j["data"] = d;
    j["assets"] = c.assets;
    j["include_cash"] = c.include_cash;
    j["train_fraction"] = c.train_fraction;
    j["cost_rate"] = c.cost_rate;
    j["window"] = c.window;
    j["strategies"] = c.strategies;
    json o = json::object();
    for (const auto& [name, v] : c.overrides) o[name] = overrides_to_json(v);
    j["overrides"] = o;
    j["out"] = c.out.generic_string();
    j["seed"] = c.seed;
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config: " + std::string(e.what()));
    }
    RunConfig c = config_from_json(j);
    c.base_dir = path.parent_path();
    return c;
}

void validate(const RunConfig& c) {
    if (c.strategies.empty()) fail("strategies", "select at least one strategy");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < c.strategies.size(); ++i) {
        const auto& s = c.strategies[i];
        const std::string p = "strategies[" + std::to_string(i) + "]";
        if (std::find(kAllStrategies.begin(), kAllStrategies.end(), s) == kAllStrategies.end())
            fail(p, "unknown strategy '" + s + "'");
        if (!seen.insert(s).second) fail(p, "duplicate strategy '" + s + "'");
    }
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail("train_fraction", "must lie in (0, 1)");
    if (!(c.cost_rate >= 0.0 && c.cost_rate < 1.0)) fail("cost_rate", "must lie in [0, 1)");
    if (c.window < 3) fail("window", "must be at least 3");
    if (!(c.max_fill_fraction >= 0.0 && c.max_fill_fraction <= 1.0)) fail("data.max_fill_fraction", "must lie in [0, 1]");
    if (c.synthetic) {
        const auto& s = *c.synthetic;
        if (s.n_assets == 0) fail("data.synthetic.n_assets", "must be positive");
        if (s.drift.size() != s.n_assets) fail("data.synthetic.drift", "needs one entry per asset");
        if (s.vol.size() != s.n_assets) fail("data.synthetic.vol", "needs one entry per asset");
        if (!s.corr.empty() && s.corr.size() != s.n_assets * s.n_assets)
            fail("data.synthetic.corr", "needs n_assets squared entries");
        for (double v : s.vol)
            if (!(v >= 0.0)) fail("data.synthetic.vol", "must be non-negative");
        if (!(s.initial_price > 0.0)) fail("data.synthetic.initial_price", "must be positive");
    }
    for (const auto& [name, o] : c.overrides) {
        const std::string p = "overrides." + name;
        if (std::find(c.strategies.begin(), c.strategies.end(), name) == c.strategies.end())
            fail(p, "strategy is not selected");
        const auto& own = is_agent(name) ? kAgentFields : kAllocatorFields;
        for (const auto& f : set_fields(o))
            if (!own.count(f)) fail(p + "." + f, "does not apply to " + name);
        if (o.lookback && (*o.lookback < 2 || *o.lookback > c.window))
            fail(p + ".lookback", "must lie in [2, window]");
        if (o.vol_target) {
            if (name != "min_variance") fail(p + ".vol_target", "only min_variance supports a volatility target");
            if (!c.include_cash) fail(p + ".vol_target", "requires include_cash");
            if (!(*o.vol_target > 0.0)) fail(p + ".vol_target", "must be positive");
        }
        if (o.mu_b && name != "mean_variance") fail(p + ".mu_b", "only mean_variance uses a baseline return");
    }
    for (const auto& s : c.strategies) {
        if (!is_agent(s)) continue;
        try {
            train_config(c, s).validate();
        } catch (const ArgumentError& e) {
            fail("overrides." + s, e.what());
        }
    }
}

std::string config_hash(const RunConfig& c) {
    json j = config_to_json(c);
    j.erase("out");
    return sha256_hex(j.dump());
}

std::string sha256_hex(std::string_view bytes) { return digest(EVP_sha256(), {}, bytes); }

std::string git_blob_sha1(std::string_view bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
    return digest(EVP_sha1(), header, bytes);
}

market::PriceSeries load_source(const RunConfig& c) {
    market::PriceSeries s = [&] {
        if (c.csv) {
            const auto path = c.csv->is_absolute() ? *c.csv : c.base_dir / *c.csv;
            market::IngestOptions opt;
            opt.max_fill_fraction = c.max_fill_fraction;
            return market::ingest_ohlc(path, opt);
        }
        const auto& syn = *c.synthetic;
        market::GbmParams p;
        p.n_assets = syn.n_assets;
        p.length = syn.length;
        p.drift = syn.drift;
        p.vol = syn.vol;
        p.corr = syn.corr;
        p.seed = syn.seed.value_or(c.seed);
        p.initial_price = syn.initial_price;
        return market::synth_gbm(p);
    }();
    if (!c.assets.empty()) s = s.select(c.assets);
    return s;
}

std::string canonical_csv(const market::PriceSeries& s) {
    std::ostringstream out;
    market::write_ohlc(s, out);
    return out.str();
}

train::TrainConfig train_config(const RunConfig& c, const std::string& strategy) {
    train::TrainConfig t;
    t.kind = agents::parse_policy_kind(strategy);
    t.window = c.window;
    t.cost_rate = c.cost_rate;
    t.seed = c.seed;
    auto it = c.overrides.find(strategy);
    if (it == c.overrides.end()) return t;
    const auto& o = it->second;
    if (o.steps) t.steps = *o.steps;
    if (o.batch_size) t.batch_size = *o.batch_size;
    if (o.learning_rate) t.learning_rate = *o.learning_rate;
    if (o.stride) t.stride = *o.stride;
    if (o.grad_clip) t.grad_clip = *o.grad_clip;
    if (o.checkpoint_every) {
        t.checkpoint_every = *o.checkpoint_every;
        if (*o.checkpoint_every > 0) t.checkpoint_dir = c.out / ("checkpoints_" + strategy);
    }
    if (o.units) t.policy.units = *o.units;
    if (o.conv_maps) t.policy.conv_maps = *o.conv_maps;
    if (o.feature_maps) t.policy.feature_maps = *o.feature_maps;
    if (o.dropout) t.policy.dropout = *o.dropout;
    if (o.pvm_tail) t.policy.pvm_tail = *o.pvm_tail;
    if (o.use_pvm) t.policy.use_pvm = *o.use_pvm;
    return t;
}

alloc::AllocatorOptions allocator_options(const RunConfig& c, const std::string& strategy) {
    alloc::AllocatorOptions a;
    a.lookback = std::min(alloc::kDefaultLookback, c.window);
    auto it = c.overrides.find(strategy);
    if (it == c.overrides.end()) return a;
    if (it->second.lookback) a.lookback = *it->second.lookback;
    a.mu_b = it->second.mu_b;
    a.vol_target = it->second.vol_target;
    return a;
}

}  // namespace rlalloc::cli
