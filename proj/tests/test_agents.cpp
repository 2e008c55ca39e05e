#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "rlalloc/agents.hpp"
#include "rlalloc/errors.hpp"
#include "rlalloc/nn/gradcheck.hpp"

using namespace rlalloc;
using namespace rlalloc::agents;

namespace {

constexpr PolicyKind kKinds[] = {PolicyKind::CNN, PolicyKind::RNN, PolicyKind::LSTM};

market::PriceSeries gbm(std::size_t n, std::size_t length, std::uint64_t seed) {
    market::GbmParams p;
    p.n_assets = n;
    p.length = length;
    p.drift.assign(n, 0.0005);
    p.vol.assign(n, 0.02);
    p.seed = seed;
    return market::synth_gbm(p);
}

std::vector<WeightVector> random_tail(std::size_t n, std::size_t len, std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    std::vector<WeightVector> tail;
    for (std::size_t j = 0; j < len; ++j) {
        std::vector<double> w(n);
        for (auto& v : w) v = gamma(rng);
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (auto& v : w) v /= s;
        tail.emplace_back(w);
    }
    return tail;
}

market::PriceTensor permuted(const market::PriceTensor& x, const std::vector<std::size_t>& perm) {
    market::PriceTensor out = x;
    for (std::size_t c = 0; c < market::PriceTensor::kChannels; ++c)
        for (std::size_t i = 0; i < x.n_assets; ++i)
            for (std::size_t k = 0; k < x.window; ++k)
                out.values[(c * x.n_assets + i) * x.window + k] = x.at(c, perm[i], k);
    return out;
}

WeightVector permuted(const WeightVector& w, const std::vector<std::size_t>& perm) {
    std::vector<double> v(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[perm[i]];
    return WeightVector(v);
}

}  // namespace

TEST_CASE("PVM reads the previous tail, oldest first, padded with uniform") {
    PortfolioVectorMemory pvm(3, 4);
    pvm.write(0, WeightVector::one_hot(3, 0));
    pvm.write(2, WeightVector::one_hot(3, 2));
    const auto tail = pvm.read(3);
    REQUIRE(tail.size() == 4);
    CHECK(tail[0] == WeightVector::uniform(3));  // t = -1
    CHECK(tail[1] == WeightVector::one_hot(3, 0));
    CHECK(tail[2] == WeightVector::uniform(3));  // never written
    CHECK(tail[3] == WeightVector::one_hot(3, 2));
    CHECK(pvm.read(0) == std::vector<WeightVector>(4, WeightVector::uniform(3)));
    CHECK(pvm.at(7) == WeightVector::uniform(3));
    pvm.reset();
    CHECK(pvm.at(0) == WeightVector::uniform(3));
}

TEST_CASE("PVM rejects vectors that are not on the simplex") {
    PortfolioVectorMemory pvm(3);
    CHECK_THROWS_AS(pvm.write(0, std::vector<double>{0.3, 0.3, 0.3}), ArgumentError);
    CHECK_THROWS_AS(pvm.write(0, std::vector<double>{-0.1, 0.6, 0.5}), ArgumentError);
    CHECK_THROWS_AS(pvm.write(0, WeightVector::uniform(4)), ArgumentError);
}

TEST_CASE("initialization is deterministic per seed") {
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 10;
        const auto a = init_policy(kind, 4, 42, o);
        const auto b = init_policy(kind, 4, 42, o);
        const auto c = init_policy(kind, 4, 43, o);
        CHECK(a.parameters == b.parameters);
        CHECK_FALSE(a.parameters == c.parameters);
    }
}

TEST_CASE("CNN first layer maps (3 x 24 x 50) to (2 x 24 x 48)") {
    const auto spec = init_policy(PolicyKind::CNN, 24, 1);
    nn::Graph g;
    g.set_output(build_policy_graph(g, spec, 1));
    CHECK(spec.parameters.at("conv1.kernel").shape() == nn::Shape{2, 3, 1, 3});
    const auto series = gbm(24, 60, 3);
    std::mt19937_64 rng(1);
    const auto state = market::build_price_tensor(series, 55);
    const auto tail = random_tail(24, 20, rng);
    nn::TensorMap in;
    bind_policy_inputs(spec, std::span(&state, 1), std::span(&tail, 1), in);
    g.forward(in);
    bool found = false;
    for (std::size_t id = 0; id < g.size(); ++id) {
        if (g.op(nn::Node{id}) == nn::Op::Conv2d) {
            CHECK(g.shape(nn::Node{id}) == nn::Shape{2, 24, 48});
            found = true;
            break;
        }
    }
    CHECK(found);
}

TEST_CASE("LSTM with 20 units has 1920 cell parameters") {
    const auto spec = init_policy(PolicyKind::LSTM, 5, 1);
    std::size_t cell = 0;
    for (const auto& [name, t] : spec.parameters)
        if (name.starts_with("lstm.")) cell += t.size();
    CHECK(cell == 1920);
    CHECK(parameter_count(spec) == 1920 + 21 + 21);
    for (std::size_t k = 0; k < 80; ++k) CHECK(spec.parameters.at("lstm.b")[k] == (k >= 20 && k < 40 ? 1.0 : 0.0));
}

TEST_CASE("identical assets with a uniform memory give uniform weights") {
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 12;
        const auto spec = init_policy(kind, 5, 9, o);
        const auto one = gbm(1, 30, 4);
        market::PriceTensor state{5, 12, {}, {}};
        const auto single = market::build_price_tensor(one, 20, 12);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t k = 0; k < 12; ++k) state.values.push_back(single.at(c, 0, k));
        const std::vector<WeightVector> tail(20, WeightVector::uniform(5));
        const auto w = policy_forward(spec, state, tail);
        for (double v : w) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("property: outputs are valid weight vectors over 10000 random inputs") {
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 8;
        const auto spec = init_policy(kind, 4, 17, o);
        PolicyRunner run(spec);
        std::mt19937_64 rng(static_cast<std::uint64_t>(kind) + 100);
        std::lognormal_distribution<double> price(0.0, 0.3);
        const int samples = kind == PolicyKind::CNN ? 10000 : 3400;
        for (int s = 0; s < samples; ++s) {
            market::PriceTensor x{4, 8, {}, std::vector<double>(96)};
            for (auto& v : x.values) v = price(rng);
            const auto w = run(x, random_tail(4, 20, rng), s % 2 == 0, s);
            double sum = 0.0;
            for (double v : w) {
                REQUIRE(std::isfinite(v));
                REQUIRE(v >= 0.0);
                sum += v;
            }
            REQUIRE(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("property: permuting assets permutes the weights") {
    std::vector<std::size_t> perm{2, 0, 3, 1};
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 10;
        const auto spec = init_policy(kind, 4, 5, o);
        const auto series = gbm(4, 40, 8);
        std::mt19937_64 rng(2);
        for (std::size_t t : {15u, 25u, 35u}) {
            const auto x = market::build_price_tensor(series, t, 10);
            const auto tail = random_tail(4, 20, rng);
            std::vector<WeightVector> ptail;
            for (const auto& w : tail) ptail.push_back(permuted(w, perm));
            const auto a = policy_forward(spec, x, tail);
            const auto b = policy_forward(spec, permuted(x, perm), ptail);
            for (std::size_t i = 0; i < 4; ++i) CHECK(b[i] == doctest::Approx(a[perm[i]]).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: a 1e-6 input perturbation moves the weights by a bounded amount") {
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 10;
        const auto spec = init_policy(kind, 4, 6, o);
        const auto series = gbm(4, 40, 10);
        std::mt19937_64 rng(7);
        const auto x = market::build_price_tensor(series, 30, 10);
        const auto tail = random_tail(4, 20, rng);
        PolicyRunner run(spec);
        const auto a = run(x, tail);
        auto y = x;
        for (auto& v : y.values) v += 1e-6;
        const auto b = run(y, tail);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-3);
    }
}

TEST_CASE("policy gradients match finite differences through a log-return objective") {
    for (PolicyKind kind : kKinds) {
        PolicyOptions o;
        o.window = 10;
        const auto spec = init_policy(kind, 4, 21, o);
        const std::size_t batch = 3;
        nn::Graph g;
        nn::Node w = build_policy_graph(g, spec, batch);
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> rel(0.97, 1.03);
        nn::Tensor y({batch, 4});
        for (auto& v : y.storage()) v = rel(rng);
        g.set_output(g.mean(g.log(g.sum(g.multiply(w, g.constant(y)), 1))));

        const auto series = gbm(4, 40, 12);
        std::vector<market::PriceTensor> states;
        std::vector<std::vector<WeightVector>> tails;
        for (std::size_t b = 0; b < batch; ++b) {
            states.push_back(market::build_price_tensor(series, 20 + b, 10));
            tails.push_back(random_tail(4, 20, rng));
        }
        nn::TensorMap in;
        bind_policy_inputs(spec, states, tails, in);
        nn::GradCheckOptions opts;
        for (const auto& [name, _] : spec.parameters) opts.wrt.push_back(name);
        opts.forward = {true, 77};
        const auto report = nn::finite_difference_check(g, in, opts);
        CHECK(report.checked > 0);
        CHECK_MESSAGE(report.max_relative_error <= 1e-4, to_string(kind) << " worst " << report.worst.input);
    }
}

TEST_CASE("PVM ablation drops the memory input") {
    PolicyOptions o;
    o.window = 10;
    o.use_pvm = false;
    const auto spec = init_policy(PolicyKind::CNN, 3, 1, o);
    CHECK(spec.parameters.at("combine.kernel").shape() == nn::Shape{1, 20, 1, 1});
    const auto x = market::build_price_tensor(gbm(3, 20, 1), 15, 10);
    const auto w = policy_forward(spec, x, {});
    CHECK(w.size() == 3);
}

TEST_CASE("policy checkpoints round-trip") {
    PolicyOptions o;
    o.window = 7;
    o.units = 5;
    const auto spec = init_policy(PolicyKind::LSTM, 3, 8, o);
    const auto path = std::filesystem::temp_directory_path() / "rlalloc_policy_test.json";
    save_policy(spec, path);
    const auto back = load_policy(path);
    std::filesystem::remove(path);
    CHECK(back.kind == spec.kind);
    CHECK(back.n_assets == 3);
    CHECK(back.options.window == 7);
    CHECK(back.options.units == 5);
    CHECK(back.parameters == spec.parameters);
    auto j = policy_to_json(spec);
    j["header"]["units"] = 6;
    CHECK_THROWS_AS(policy_from_json(j), ArgumentError);
}

TEST_CASE("shape mismatches are reported") {
    PolicyOptions o;
    o.window = 10;
    const auto spec = init_policy(PolicyKind::CNN, 4, 1, o);
    const auto x = market::build_price_tensor(gbm(4, 40, 1), 30, 12);
    CHECK_THROWS_AS(policy_forward(spec, x, std::vector<WeightVector>(20, WeightVector::uniform(4))), ArgumentError);
    CHECK_THROWS_AS(init_policy(PolicyKind::CNN, 1, 1), ArgumentError);
    CHECK_THROWS_AS(parse_policy_kind("gru"), ArgumentError);
}
