#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "rlalloc/errors.hpp"
#include "rlalloc/nn/adam.hpp"
#include "rlalloc/nn/checkpoint.hpp"
#include "rlalloc/nn/gradcheck.hpp"
#include "rlalloc/nn/graph.hpp"

using namespace rlalloc;
using namespace rlalloc::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("forward and backward of x^2") {
    Graph g;
    Node x = g.input("x", {1});
    g.set_output(g.multiply(x, x));
    CHECK(g.forward({{"x", Tensor::scalar(3.0)}}).item() == 9.0);
    CHECK(g.backward().at("x").item() == 6.0);
}

TEST_CASE("softmax of a zero vector is uniform") {
    Graph g;
    Node x = g.input("x", {24});
    g.set_output(g.softmax(x));
    const Tensor& y = g.forward({{"x", Tensor({24}, 0.0)}});
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 24).epsilon(1e-15));
}

TEST_CASE("1x3 all-ones kernel over an all-ones (1x24x50) input") {
    Graph g;
    Node x = g.input("x", {1, 24, 50});
    Node k = g.input("k", {1, 1, 1, 3});
    Node y = g.conv2d(x, k);
    g.set_output(g.sum(y));
    g.forward({{"x", Tensor({1, 24, 50}, 1.0)}, {"k", Tensor({1, 1, 1, 3}, 1.0)}});
    CHECK(g.shape(y) == Shape{1, 24, 48});
    for (double v : g.value(y).data()) CHECK(v == 3.0);
}

TEST_CASE("conv output matches a direct convolution sum") {
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({2, 4, 7}, rng);
    const Tensor k = random_tensor({3, 2, 2, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    Graph g;
    Node out = g.conv2d(g.input("x", {2, 4, 7}), g.input("k", {3, 2, 2, 3}), g.input("b", {3}));
    g.set_output(g.sum(out));
    g.forward({{"x", x}, {"k", k}, {"b", b}});
    const Tensor& y = g.value(out);
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 5; ++c) {
                double ref = b[o];
                for (std::size_t ch = 0; ch < 2; ++ch)
                    for (std::size_t i = 0; i < 2; ++i)
                        for (std::size_t j = 0; j < 3; ++j)
                            ref += x[(ch * 4 + r + i) * 7 + c + j] * k[((o * 2 + ch) * 2 + i) * 3 + j];
                CHECK(y[(o * 3 + r) * 5 + c] == doctest::Approx(ref).epsilon(1e-14));
            }
}

TEST_CASE("gradient of mean(softmax) w.r.t. logits sums to zero per row") {
    std::mt19937_64 rng(5);
    Graph g;
    Node x = g.input("x", {3, 6});
    Node w = g.constant(random_tensor({3, 6}, rng));
    g.set_output(g.mean(g.multiply(g.softmax(x), w)));
    g.forward({{"x", random_tensor({3, 6}, rng)}});
    const Tensor grad = g.backward().at("x");
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) s += grad[r * 6 + c];
        CHECK(std::abs(s) < 1e-15);
    }
}

TEST_CASE("shape errors name the node kind") {
    Graph g;
    Node a = g.input("a", {2, 3});
    Node b = g.input("b", {4, 5});
    try {
        g.matmul(a, b);
        FAIL("expected a graph error");
    } catch (const GraphError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
    CHECK_THROWS_AS(g.add(a, b), GraphError);
    g.set_output(g.sum(a));
    CHECK_THROWS_AS(g.forward({{"a", Tensor({3, 2})}}), GraphError);
    CHECK_THROWS_AS(g.forward({}), GraphError);
}

TEST_CASE("backward needs a scalar output") {
    Graph g;
    Node a = g.input("a", {2});
    g.set_output(g.tanh(a));
    g.forward({{"a", Tensor({2}, 0.5)}});
    CHECK_THROWS_AS(g.backward(), ContractError);
}

TEST_CASE("finite differences are exact for a linear graph") {
    std::mt19937_64 rng(1);
    Graph g;
    Node x = g.input("x", {5});
    g.set_output(g.sum(g.multiply(x, g.constant(random_tensor({5}, rng)))));
    const auto report = finite_difference_check(g, {{"x", random_tensor({5}, rng)}});
    CHECK(report.checked == 5);
    CHECK(report.max_relative_error <= 1e-10);
}

TEST_CASE("ReLU evaluated exactly at its kink is excluded, not failed") {
    Graph g;
    Node x = g.input("x", {3});
    g.set_output(g.sum(g.relu(x)));
    const auto report = finite_difference_check(g, {{"x", Tensor({3}, std::vector<double>{0.0, 0.7, -0.4})}});
    REQUIRE(report.excluded.size() == 1);
    CHECK(report.excluded[0].index == 0);
    CHECK(report.checked == 2);
    CHECK(report.max_relative_error <= 1e-8);
}

TEST_CASE("gradient property: random graphs over every node kind match finite differences") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        std::mt19937_64 rng(seed);
        Graph g;
        Node x = g.input("x", {2, 3, 6});
        Node k = g.input("k", {2, 2, 1, 3});
        Node b = g.input("b", {2});
        Node m = g.input("m", {4, 5});
        Node row = g.input("row", {1, 5});

        Node c = g.relu(g.conv2d(x, k, b));                  // (2,3,4)
        Node flat = g.reshape(c, {6, 4});                     // (6,4)
        Node mm = g.tanh(g.matmul(flat, m));                  // (6,5)
        Node biased = g.add(mm, row);                         // broadcast row
        Node gates = g.sigmoid(g.slice(biased, 1, 1, 4));     // (6,3)
        Node both = g.concat({gates, g.slice(mm, 1, 0, 2)}, 1);  // (6,5)
        Node soft = g.softmax(g.multiply(both, g.dropout(biased, 0.3)));
        Node pos = g.add(g.sum(soft, 0), g.constant(Tensor({1, 5}, 0.5)));
        Node total = g.add(g.mean(g.log(pos)), g.scale(g.sum(g.abs(mm)), 0.01));
        g.set_output(total);

        TensorMap in{{"x", random_tensor({2, 3, 6}, rng)},
                     {"k", random_tensor({2, 2, 1, 3}, rng)},
                     {"b", random_tensor({2}, rng)},
                     {"m", random_tensor({4, 5}, rng)},
                     {"row", random_tensor({1, 5}, rng)}};
        GradCheckOptions opts;
        opts.forward = {true, seed + 100};
        const auto report = finite_difference_check(g, in, opts);
        CHECK(report.checked > 0);
        CHECK_MESSAGE(report.max_relative_error <= 1e-4,
                      "seed " << seed << " worst " << report.worst.input << "[" << report.worst.index << "]");
    }
}

TEST_CASE("softmax rows are non-negative and sum to one") {
    std::mt19937_64 rng(7);
    Graph g;
    Node x = g.input("x", {50, 9});
    g.set_output(g.softmax(x));
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor& y = g.forward({{"x", random_tensor({50, 9}, rng, -30.0, 30.0)}});
        for (std::size_t r = 0; r < 50; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 9; ++c) {
                CHECK(y[r * 9 + c] >= 0.0);
                s += y[r * 9 + c];
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("dropout: identity in evaluation, deterministic per seed in training") {
    std::mt19937_64 rng(9);
    const Tensor in = random_tensor({100}, rng);
    Graph g;
    Node x = g.input("x", {100});
    g.set_output(g.dropout(x, 0.1));
    CHECK(g.forward({{"x", in}}) == in);
    const Tensor a = g.forward({{"x", in}}, {true, 11});
    const Tensor b = g.forward({{"x", in}}, {true, 11});
    const Tensor c = g.forward({{"x", in}}, {true, 12});
    CHECK(a == b);
    CHECK_FALSE(a == c);
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        if (a[i] == 0.0) ++dropped;
        else CHECK(a[i] == doctest::Approx(in[i] / 0.9).epsilon(1e-15));
    }
    CHECK(dropped > 0);
    CHECK(dropped < 30);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged but counts the step") {
    TensorMap params{{"w", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5})}};
    const TensorMap before = params;
    AdamState state;
    adam_update(params, {{"w", Tensor({3}, 0.0)}}, state, 0.01);
    CHECK(params == before);
    CHECK(state.step_count == 1);
}

TEST_CASE("adam: first step moves each coordinate by the learning rate") {
    TensorMap params{{"w", Tensor({4}, 0.0)}};
    const TensorMap grads{{"w", Tensor({4}, std::vector<double>{0.3, 2.0, 1e-2, 50.0})}};
    AdamState state;
    const double lr = 0.028;
    adam_update(params, grads, state, lr, Direction::Ascent);
    for (double v : params.at("w").data()) CHECK(std::abs(v - lr) <= 1e-6 * lr);
    TensorMap down{{"w", Tensor({4}, 0.0)}};
    AdamState s2;
    adam_update(down, grads, s2, lr, Direction::Descent);
    for (double v : down.at("w").data()) CHECK(std::abs(v + lr) <= 1e-6 * lr);
}

TEST_CASE("adam: zero learning rate and shape mismatch") {
    TensorMap params{{"w", Tensor({2}, 1.0)}};
    AdamState state;
    adam_update(params, {{"w", Tensor({2}, 5.0)}}, state, 0.0);
    CHECK(params.at("w") == Tensor({2}, 1.0));
    CHECK_THROWS_AS(adam_update(params, {{"w", Tensor({3}, 5.0)}}, state, 0.1), ArgumentError);
    CHECK_THROWS_AS(adam_update(params, {}, state, 0.1), ArgumentError);
    for (double v : state.v.at("w").data()) CHECK(v >= 0.0);
}

TEST_CASE("checkpoint round-trips bit-identically with a format version") {
    std::mt19937_64 rng(13);
    TensorMap params{{"conv", random_tensor({2, 3, 1, 3}, rng, -1e3, 1e3)},
                     {"bias", Tensor({2}, std::vector<double>{1.0 / 3.0, -0.1})},
                     {"tiny", Tensor({1}, std::vector<double>{5e-324})}};
    const auto j = parameters_to_json(params);
    CHECK(j.at("format_version") == kCheckpointFormatVersion);
    const auto path = std::filesystem::temp_directory_path() / "rlalloc_ckpt_test.json";
    save_parameters(params, path);
    const TensorMap back = load_parameters(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == params.size());
    for (const auto& [name, t] : params) {
        REQUIRE(back.at(name).shape() == t.shape());
        CHECK(std::memcmp(back.at(name).data().data(), t.data().data(), t.size() * sizeof(double)) == 0);
    }
    auto bad = j;
    bad["format_version"] = 99;
    CHECK_THROWS_AS(parameters_from_json(bad), DataError);
}
