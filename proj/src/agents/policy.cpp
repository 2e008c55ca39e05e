#include <cmath>
#include <fstream>
#include <optional>
#include <random>

#include "rlalloc/agents.hpp"
#include "rlalloc/errors.hpp"
#include "rlalloc/nn/checkpoint.hpp"

namespace rlalloc::agents {

using nn::Node;
using nn::Shape;
using nn::Tensor;

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::CNN: return "cnn";
        case PolicyKind::RNN: return "rnn";
        case PolicyKind::LSTM: return "lstm";
    }
    return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
    if (name == "cnn") return PolicyKind::CNN;
    if (name == "rnn") return PolicyKind::RNN;
    if (name == "lstm") return PolicyKind::LSTM;
    throw ArgumentError("unknown policy kind '" + std::string(name) + "'");
}

namespace {

constexpr std::size_t kFeatures = market::PriceTensor::kChannels;

bool recurrent(PolicyKind k) { return k != PolicyKind::CNN; }

std::size_t gate_count(PolicyKind k) { return k == PolicyKind::LSTM ? 4 : 1; }

std::string prefix(PolicyKind k) { return k == PolicyKind::LSTM ? "lstm" : "rnn"; }

std::size_t combine_inputs(const PolicySpec& s) {
    const std::size_t base = s.kind == PolicyKind::CNN ? s.options.feature_maps : 1;
    return base + (s.options.use_pvm ? s.options.pvm_tail : 0);
}

// Expected parameter shapes for an architecture.
std::map<std::string, Shape> parameter_shapes(const PolicySpec& s) {
    const auto& o = s.options;
    if (s.kind == PolicyKind::CNN) {
        return {
            {"conv1.kernel", {o.conv_maps, kFeatures, 1, 3}},
            {"conv1.bias", {o.conv_maps}},
            {"conv2.kernel", {o.feature_maps, o.conv_maps, 1, o.window - 2}},
            {"conv2.bias", {o.feature_maps}},
            {"combine.kernel", {1, combine_inputs(s), 1, 1}},
        };
    }
    const std::size_t g = gate_count(s.kind) * o.units;
    const std::string p = prefix(s.kind);
    return {
        {p + ".wx", {kFeatures, g}},
        {p + ".wh", {o.units, g}},
        {p + ".b", {1, g}},
        {"head.w", {o.units, 1}},
        {"head.b", {1, 1}},
        {"combine.w", {combine_inputs(s), 1}},
    };
}

void validate_dims(const PolicySpec& s) {
    const auto& o = s.options;
    if (s.n_assets < 2) throw ArgumentError("policy needs at least 2 assets");
    if (s.kind == PolicyKind::CNN && o.window < 3) throw ArgumentError("CNN policy needs a window of at least 3");
    if (o.window < 2) throw ArgumentError("policy window must be at least 2");
    if (recurrent(s.kind) && o.units == 0) throw ArgumentError("recurrent policy needs hidden units");
    if (o.use_pvm && o.pvm_tail == 0) throw ArgumentError("PVM tail must be positive when enabled");
    if (!(o.dropout >= 0.0 && o.dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
}

void check_parameters(const PolicySpec& s) {
    const auto shapes = parameter_shapes(s);
    if (shapes.size() != s.parameters.size()) throw ArgumentError("policy parameter set does not match its kind");
    for (const auto& [name, shape] : shapes) {
        auto it = s.parameters.find(name);
        if (it == s.parameters.end()) throw ArgumentError("policy is missing parameter '" + name + "'");
        if (it->second.shape() != shape) {
            throw ArgumentError("parameter '" + name + "' has shape " + nn::shape_string(it->second.shape()) +
                                ", expected " + nn::shape_string(shape));
        }
    }
}

std::pair<double, double> fans(const Shape& shape) {
    if (shape.size() == 4) {
        const double field = static_cast<double>(shape[2] * shape[3]);
        return {static_cast<double>(shape[1]) * field, static_cast<double>(shape[0]) * field};
    }
    return {static_cast<double>(shape[0]), static_cast<double>(shape[1])};
}

// Prices normalized by the last close sit near 1; shifting them to 0 keeps
// the first ReLU layer from starting dead for every asset at once.
Node centered(nn::Graph& g, Node x) { return g.add(x, g.constant(Tensor::scalar(-1.0))); }

bool is_bias(const std::string& name) {
    return name.ends_with(".bias") || name.ends_with(".b");
}

}  // namespace

PolicySpec init_policy(PolicyKind kind, std::size_t n_assets, std::uint64_t seed, const PolicyOptions& options) {
    PolicySpec spec;
    spec.kind = kind;
    spec.n_assets = n_assets;
    spec.seed = seed;
    spec.options = options;
    validate_dims(spec);

    std::mt19937_64 rng(seed);
    for (const auto& [name, shape] : parameter_shapes(spec)) {
        Tensor t(shape, 0.0);
        if (!is_bias(name)) {
            const auto [fan_in, fan_out] = fans(shape);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& v : t.storage()) {
                const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                v = (2.0 * u - 1.0) * limit;
            }
        } else if (kind == PolicyKind::LSTM && name == "lstm.b") {
            // Gate order i, f, g, o.
            for (std::size_t k = options.units; k < 2 * options.units; ++k) t[k] = 1.0;
        }
        spec.parameters.emplace(name, std::move(t));
    }
    return spec;
}

std::size_t parameter_count(const PolicySpec& spec) {
    std::size_t n = 0;
    for (const auto& [_, t] : spec.parameters) n += t.size();
    return n;
}

Node build_policy_graph(nn::Graph& g, const PolicySpec& s, std::size_t batch) {
    validate_dims(s);
    check_parameters(s);
    if (batch == 0) throw ArgumentError("batch must be positive");
    const auto& o = s.options;
    const std::size_t rows = batch * s.n_assets;
    std::map<std::string, Node> p;
    for (const auto& [name, t] : s.parameters) p.emplace(name, g.input(name, t.shape()));

    Node scores{};
    if (s.kind == PolicyKind::CNN) {
        Node x = centered(g, g.input("state", {kFeatures, rows, o.window}));
        Node h1 = g.relu(g.conv2d(x, p.at("conv1.kernel"), p.at("conv1.bias")));
        Node h2 = g.relu(g.conv2d(h1, p.at("conv2.kernel"), p.at("conv2.bias")));  // (F, rows, 1)
        Node features = h2;
        if (o.use_pvm) features = g.concat({h2, g.input("pvm", {o.pvm_tail, rows, 1})}, 0);
        scores = g.conv2d(features, p.at("combine.kernel"));  // (1, rows, 1)
    } else {
        const std::string pre = prefix(s.kind);
        const std::size_t u = o.units;
        Node x = centered(g, g.input("state", {o.window, rows, kFeatures}));
        Node wx = p.at(pre + ".wx"), wh = p.at(pre + ".wh"), b = p.at(pre + ".b");
        std::optional<Node> h, c;
        for (std::size_t k = 0; k < o.window; ++k) {
            Node xt = g.reshape(g.slice(x, 0, k, k + 1), {rows, kFeatures});
            Node z = g.add(g.matmul(xt, wx), b);
            if (h) z = g.add(z, g.matmul(*h, wh));
            if (s.kind == PolicyKind::RNN) {
                h = g.tanh(z);
                continue;
            }
            Node in_gate = g.sigmoid(g.slice(z, 1, 0, u));
            Node forget = g.sigmoid(g.slice(z, 1, u, 2 * u));
            Node cand = g.tanh(g.slice(z, 1, 2 * u, 3 * u));
            Node out_gate = g.sigmoid(g.slice(z, 1, 3 * u, 4 * u));
            Node write = g.multiply(in_gate, cand);
            c = c ? g.add(g.multiply(forget, *c), write) : write;
            h = g.multiply(out_gate, g.tanh(*c));
        }
        Node last = g.dropout(*h, o.dropout);
        Node score = g.add(g.matmul(last, p.at("head.w")), p.at("head.b"));  // (rows, 1)
        Node features = score;
        if (o.use_pvm) features = g.concat({score, g.input("pvm", {rows, o.pvm_tail})}, 1);
        scores = g.matmul(features, p.at("combine.w"));
    }
    return g.softmax(g.reshape(scores, {batch, s.n_assets}));
}

void bind_policy_inputs(const PolicySpec& s, std::span<const market::PriceTensor> states,
                        std::span<const std::vector<WeightVector>> tails, nn::TensorMap& inputs) {
    const auto& o = s.options;
    const std::size_t batch = states.size();
    const std::size_t n = s.n_assets;
    const std::size_t rows = batch * n;
    if (batch == 0) throw ArgumentError("empty batch");
    if (o.use_pvm && tails.size() != batch) throw ArgumentError("need one PVM tail per state");

    const bool rec = recurrent(s.kind);
    Tensor state(rec ? Shape{o.window, rows, kFeatures} : Shape{kFeatures, rows, o.window});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& st = states[b];
        if (st.n_assets != n || st.window != o.window) {
            throw ArgumentError("state tensor is (3 x " + std::to_string(st.n_assets) + " x " +
                                std::to_string(st.window) + "), policy expects (3 x " + std::to_string(n) +
                                " x " + std::to_string(o.window) + ")");
        }
        for (std::size_t c = 0; c < kFeatures; ++c)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < o.window; ++k) {
                    const std::size_t r = b * n + i;
                    const std::size_t idx = rec ? (k * rows + r) * kFeatures + c : (c * rows + r) * o.window + k;
                    state[idx] = st.at(c, i, k);
                }
    }
    inputs.insert_or_assign("state", std::move(state));

    if (o.use_pvm) {
        Tensor pvm(rec ? Shape{rows, o.pvm_tail} : Shape{o.pvm_tail, rows, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            const auto& tail = tails[b];
            if (tail.size() != o.pvm_tail) {
                throw ArgumentError("PVM tail has " + std::to_string(tail.size()) + " vectors, expected " +
                                    std::to_string(o.pvm_tail));
            }
            for (std::size_t j = 0; j < o.pvm_tail; ++j) {
                if (tail[j].size() != n) throw ArgumentError("PVM tail vector has the wrong asset count");
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t r = b * n + i;
                    pvm[rec ? r * o.pvm_tail + j : j * rows + r] = tail[j][i];
                }
            }
        }
        inputs.insert_or_assign("pvm", std::move(pvm));
    }
    for (const auto& [name, t] : s.parameters) inputs.insert_or_assign(name, t);
}

PolicyRunner::PolicyRunner(PolicySpec spec) : spec_(std::move(spec)) {
    graph_.set_output(build_policy_graph(graph_, spec_, 1));
}

WeightVector PolicyRunner::operator()(const market::PriceTensor& state, const std::vector<WeightVector>& tail,
                                      bool train_mode, std::uint64_t seed) {
    bind_policy_inputs(spec_, std::span(&state, 1), std::span(&tail, 1), inputs_);
    const Tensor& w = graph_.forward(inputs_, {train_mode, seed});
    return WeightVector(w.storage());
}

WeightVector policy_forward(const PolicySpec& spec, const market::PriceTensor& state,
                            const std::vector<WeightVector>& tail, bool train_mode, std::uint64_t seed) {
    PolicyRunner runner(spec);
    return runner(state, tail, train_mode, seed);
}

nlohmann::json policy_to_json(const PolicySpec& s) {
    nlohmann::json j = nn::parameters_to_json(s.parameters);
    const auto& o = s.options;
    j["header"] = {
        {"kind", to_string(s.kind)}, {"n_assets", s.n_assets},         {"window", o.window},
        {"units", o.units},          {"conv_maps", o.conv_maps},       {"feature_maps", o.feature_maps},
        {"dropout", o.dropout},      {"pvm_tail", o.pvm_tail},         {"use_pvm", o.use_pvm},
        {"seed", s.seed},
    };
    return j;
}

PolicySpec policy_from_json(const nlohmann::json& j) {
    const auto& h = j.at("header");
    PolicySpec s;
    s.kind = parse_policy_kind(h.at("kind").get<std::string>());
    s.n_assets = h.at("n_assets").get<std::size_t>();
    s.seed = h.at("seed").get<std::uint64_t>();
    s.options.window = h.at("window").get<std::size_t>();
    s.options.units = h.at("units").get<std::size_t>();
    s.options.conv_maps = h.at("conv_maps").get<std::size_t>();
    s.options.feature_maps = h.at("feature_maps").get<std::size_t>();
    s.options.dropout = h.at("dropout").get<double>();
    s.options.pvm_tail = h.at("pvm_tail").get<std::size_t>();
    s.options.use_pvm = h.at("use_pvm").get<bool>();
    s.parameters = nn::parameters_from_json(j);
    validate_dims(s);
    check_parameters(s);
    return s;
}

void save_policy(const PolicySpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write policy checkpoint " + path.string());
    out << policy_to_json(spec).dump(1) << '\n';
}

PolicySpec load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read policy checkpoint " + path.string());
    return policy_from_json(nlohmann::json::parse(in));
}

}  // namespace rlalloc::agents
