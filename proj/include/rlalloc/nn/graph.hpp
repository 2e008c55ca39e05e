#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlalloc/nn/tensor.hpp"

namespace rlalloc::nn {

enum class Op {
    Input,
    Constant,
    Add,
    Multiply,
    MatMul,
    Conv2d,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Concat,
    Slice,
    Sum,
    Mean,
    Log,
    Dropout,
    Reshape,
};

const char* op_name(Op op);

/// Handle to a node inside one Graph.
struct Node {
    std::size_t id = 0;
};

struct ForwardOptions {
    bool train = false;       // enables dropout
    std::uint64_t seed = 0;   // dropout masks are a pure function of (seed, node)
};

/// Static computation graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order and their shapes are inferred at
/// construction, so a graph is built once and then evaluated many times with
/// different input bindings. Inputs are named leaves; backward() returns the
/// gradient of the scalar output with respect to every input.
///
/// Elementwise add/multiply broadcast numpy-style: shapes are right-aligned
/// and each dimension must match or be 1.
class Graph {
public:
    Node input(std::string name, Shape shape);
    Node constant(Tensor value);

    Node add(Node a, Node b);
    Node multiply(Node a, Node b);
    Node matmul(Node a, Node b);
    /// x: (C, H, W), kernel: (O, C, KH, KW), bias: (O) -> (O, H-KH+1, W-KW+1).
    Node conv2d(Node x, Node kernel, std::optional<Node> bias = std::nullopt);
    Node relu(Node x);
    Node tanh(Node x);
    Node sigmoid(Node x);
    /// Softmax over the last axis.
    Node softmax(Node x);
    Node concat(const std::vector<Node>& parts, std::size_t axis);
    Node slice(Node x, std::size_t axis, std::size_t begin, std::size_t end);
    Node sum(Node x);
    /// Sum over one axis, keeping it with extent 1.
    Node sum(Node x, std::size_t axis);
    Node mean(Node x);
    Node log(Node x);
    /// Inverted dropout; identity unless ForwardOptions::train is set.
    Node dropout(Node x, double rate);
    Node reshape(Node x, Shape shape);

    // Compositions of the primitive kinds above.
    Node scale(Node x, double factor);
    Node sub(Node a, Node b);
    Node abs(Node x);  // relu(x) + relu(-x)

    void set_output(Node n);
    Node output() const;

    const Tensor& forward(const TensorMap& inputs, const ForwardOptions& options = {});
    /// Gradients of the (scalar) output w.r.t. every named input.
    TensorMap backward();

    const Tensor& value(Node n) const;
    const Shape& shape(Node n) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    std::vector<std::string> input_names() const;
    Op op(Node n) const;

    /// Sign of every ReLU pre-activation (x > 0) from the last forward pass.
    /// Two evaluations with different signatures straddle a kink.
    std::vector<bool> relu_signature() const;

private:
    struct NodeData {
        Op op = Op::Input;
        std::vector<std::size_t> inputs;
        Shape shape;
        std::string name;  // inputs only
        Tensor value;
        // Op-specific attributes.
        std::size_t axis = 0;
        std::size_t begin = 0;
        std::size_t end = 0;
        double rate = 0.0;
        // Broadcast gather maps for Add/Multiply: output index -> input index.
        std::vector<std::size_t> map_a, map_b;
        std::vector<double> mask;  // dropout
    };

    Node push(NodeData node);
    const NodeData& at(Node n) const;
    [[noreturn]] void fail(Op op, const std::string& what) const;
    Node elementwise(Op op, Node a, Node b);
    Node unary(Op op, Node x);

    void eval(std::size_t id, const ForwardOptions& options);
    void accumulate(std::size_t id, std::vector<Tensor>& adj) const;

    std::vector<NodeData> nodes_;
    std::optional<std::size_t> output_;
    bool evaluated_ = false;
};

}  // namespace rlalloc::nn
