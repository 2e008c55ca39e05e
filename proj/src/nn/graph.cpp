#include "rlalloc/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rlalloc/errors.hpp"

namespace rlalloc::nn {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Multiply: return "multiply";
        case Op::MatMul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::Relu: return "relu";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softmax: return "softmax";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Log: return "log";
        case Op::Dropout: return "dropout";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

namespace {

// For a right-aligned broadcast of `in` to `out`, returns the input offset of
// every output element.
std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    Shape padded(r, 1);
    std::copy(in.begin(), in.end(), padded.begin() + static_cast<std::ptrdiff_t>(r - in.size()));
    std::vector<std::size_t> in_stride(r, 0);
    std::size_t stride = 1;
    for (std::size_t d = r; d-- > 0;) {
        in_stride[d] = padded[d] == 1 ? 0 : stride;
        stride *= padded[d];
    }
    const std::size_t total = shape_size(out);
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < r; ++d) off += idx[d] * in_stride[d];
        map[k] = off;
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out[d]) break;
            idx[d] = 0;
        }
    }
    return map;
}

// (outer, axis extent, inner) decomposition of a shape around one axis.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit a;
    for (std::size_t d = 0; d < axis; ++d) a.outer *= s[d];
    a.extent = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) a.inner *= s[d];
    return a;
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Node Graph::push(NodeData node) {
    nodes_.push_back(std::move(node));
    evaluated_ = false;
    return Node{nodes_.size() - 1};
}

const Graph::NodeData& Graph::at(Node n) const {
    if (n.id >= nodes_.size()) throw GraphError("node " + std::to_string(n.id) + " does not exist");
    return nodes_[n.id];
}

void Graph::fail(Op op, const std::string& what) const {
    throw GraphError(std::string(op_name(op)) + " node #" + std::to_string(nodes_.size()) + ": " + what);
}

Node Graph::input(std::string name, Shape shape) {
    for (const auto& n : nodes_) {
        if (n.op == Op::Input && n.name == name) fail(Op::Input, "duplicate input name '" + name + "'");
    }
    NodeData d;
    d.op = Op::Input;
    d.name = std::move(name);
    d.value = Tensor(shape);
    d.shape = std::move(shape);
    return push(std::move(d));
}

Node Graph::constant(Tensor value) {
    NodeData d;
    d.op = Op::Constant;
    d.shape = value.shape();
    d.value = std::move(value);
    return push(std::move(d));
}

Node Graph::elementwise(Op op, Node a, Node b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    const std::size_t r = std::max(sa.size(), sb.size());
    Shape out(r, 1);
    for (std::size_t d = 0; d < r; ++d) {
        const std::size_t da = d + sa.size() >= r ? sa[d + sa.size() - r] : 1;
        const std::size_t db = d + sb.size() >= r ? sb[d + sb.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            fail(op, "cannot broadcast " + shape_string(sa) + " with " + shape_string(sb));
        }
        out[d] = std::max(da, db);
    }
    NodeData d;
    d.op = op;
    d.inputs = {a.id, b.id};
    d.map_a = broadcast_map(sa, out);
    d.map_b = broadcast_map(sb, out);
    d.shape = std::move(out);
    return push(std::move(d));
}

Node Graph::add(Node a, Node b) { return elementwise(Op::Add, a, b); }
Node Graph::multiply(Node a, Node b) { return elementwise(Op::Multiply, a, b); }

Node Graph::matmul(Node a, Node b) {
    const Shape& sa = at(a).shape;
    const Shape& sb = at(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        fail(Op::MatMul, "incompatible operands " + shape_string(sa) + " and " + shape_string(sb));
    }
    NodeData d;
    d.op = Op::MatMul;
    d.inputs = {a.id, b.id};
    d.shape = {sa[0], sb[1]};
    return push(std::move(d));
}

Node Graph::conv2d(Node x, Node kernel, std::optional<Node> bias) {
    const Shape& sx = at(x).shape;
    const Shape& sk = at(kernel).shape;
    if (sx.size() != 3 || sk.size() != 4 || sk[1] != sx[0] || sk[2] > sx[1] || sk[3] > sx[2]) {
        fail(Op::Conv2d, "input " + shape_string(sx) + " incompatible with kernel " + shape_string(sk));
    }
    NodeData d;
    d.op = Op::Conv2d;
    d.inputs = {x.id, kernel.id};
    if (bias) {
        if (at(*bias).shape != Shape{sk[0]}) {
            fail(Op::Conv2d, "bias " + shape_string(at(*bias).shape) + " must have one entry per output channel");
        }
        d.inputs.push_back(bias->id);
    }
    d.shape = {sk[0], sx[1] - sk[2] + 1, sx[2] - sk[3] + 1};
    return push(std::move(d));
}

Node Graph::unary(Op op, Node x) {
    NodeData d;
    d.op = op;
    d.inputs = {x.id};
    d.shape = at(x).shape;
    return push(std::move(d));
}

Node Graph::relu(Node x) { return unary(Op::Relu, x); }
Node Graph::tanh(Node x) { return unary(Op::Tanh, x); }
Node Graph::sigmoid(Node x) { return unary(Op::Sigmoid, x); }
Node Graph::softmax(Node x) { return unary(Op::Softmax, x); }
Node Graph::log(Node x) { return unary(Op::Log, x); }

Node Graph::dropout(Node x, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) fail(Op::Dropout, "rate must lie in [0, 1)");
    NodeData d;
    d.op = Op::Dropout;
    d.inputs = {x.id};
    d.shape = at(x).shape;
    d.rate = rate;
    return push(std::move(d));
}

Node Graph::concat(const std::vector<Node>& parts, std::size_t axis) {
    if (parts.empty()) fail(Op::Concat, "needs at least one input");
    Shape out = at(parts[0]).shape;
    if (axis >= out.size()) fail(Op::Concat, "axis out of range");
    out[axis] = 0;
    NodeData d;
    d.op = Op::Concat;
    d.axis = axis;
    for (Node p : parts) {
        const Shape& s = at(p).shape;
        if (s.size() != out.size()) fail(Op::Concat, "rank mismatch " + shape_string(s));
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (k != axis && s[k] != out[k]) fail(Op::Concat, "shape mismatch " + shape_string(s));
        }
        out[axis] += s[axis];
        d.inputs.push_back(p.id);
    }
    d.shape = std::move(out);
    return push(std::move(d));
}

Node Graph::slice(Node x, std::size_t axis, std::size_t begin, std::size_t end) {
    Shape s = at(x).shape;
    if (axis >= s.size() || begin >= end || end > s[axis]) {
        fail(Op::Slice, "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                            shape_string(s));
    }
    NodeData d;
    d.op = Op::Slice;
    d.inputs = {x.id};
    d.axis = axis;
    d.begin = begin;
    d.end = end;
    s[axis] = end - begin;
    d.shape = std::move(s);
    return push(std::move(d));
}

Node Graph::sum(Node x) {
    NodeData d;
    d.op = Op::Sum;
    d.inputs = {x.id};
    d.axis = static_cast<std::size_t>(-1);
    d.shape = {1};
    return push(std::move(d));
}

Node Graph::sum(Node x, std::size_t axis) {
    Shape s = at(x).shape;
    if (axis >= s.size()) fail(Op::Sum, "axis out of range");
    NodeData d;
    d.op = Op::Sum;
    d.inputs = {x.id};
    d.axis = axis;
    s[axis] = 1;
    d.shape = std::move(s);
    return push(std::move(d));
}

Node Graph::mean(Node x) {
    NodeData d;
    d.op = Op::Mean;
    d.inputs = {x.id};
    d.shape = {1};
    return push(std::move(d));
}

Node Graph::reshape(Node x, Shape shape) {
    if (shape_size(shape) != shape_size(at(x).shape)) {
        fail(Op::Reshape, "cannot reshape " + shape_string(at(x).shape) + " to " + shape_string(shape));
    }
    NodeData d;
    d.op = Op::Reshape;
    d.inputs = {x.id};
    d.shape = std::move(shape);
    return push(std::move(d));
}

Node Graph::scale(Node x, double factor) { return multiply(x, constant(Tensor::scalar(factor))); }
Node Graph::sub(Node a, Node b) { return add(a, scale(b, -1.0)); }
Node Graph::abs(Node x) { return add(relu(x), relu(scale(x, -1.0))); }

void Graph::set_output(Node n) {
    at(n);
    output_ = n.id;
}

Node Graph::output() const {
    if (!output_) throw GraphError("graph has no output node");
    return Node{*output_};
}

const Tensor& Graph::value(Node n) const { return at(n).value; }
const Shape& Graph::shape(Node n) const { return at(n).shape; }
Op Graph::op(Node n) const { return at(n).op; }

std::vector<std::string> Graph::input_names() const {
    std::vector<std::string> names;
    for (const auto& n : nodes_) {
        if (n.op == Op::Input) names.push_back(n.name);
    }
    return names;
}

const Tensor& Graph::forward(const TensorMap& inputs, const ForwardOptions& options) {
    const std::size_t out = output().id;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        NodeData& n = nodes_[id];
        if (n.op == Op::Input) {
            auto it = inputs.find(n.name);
            if (it == inputs.end()) {
                throw GraphError("input node #" + std::to_string(id) + " '" + n.name + "' is not bound");
            }
            if (it->second.shape() != n.shape) {
                throw GraphError("input node #" + std::to_string(id) + " '" + n.name + "' expects " +
                                 shape_string(n.shape) + ", got " + shape_string(it->second.shape()));
            }
            n.value = it->second;
        } else if (n.op != Op::Constant) {
            eval(id, options);
        }
    }
    evaluated_ = true;
    return nodes_[out].value;
}

void Graph::eval(std::size_t id, const ForwardOptions& options) {
    NodeData& n = nodes_[id];
    Tensor out(n.shape);
    auto& y = out.storage();
    const auto in = [&](std::size_t k) -> const std::vector<double>& { return nodes_[n.inputs[k]].value.storage(); };

    switch (n.op) {
        case Op::Add: {
            const auto& a = in(0);
            const auto& b = in(1);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = a[n.map_a[k]] + b[n.map_b[k]];
            break;
        }
        case Op::Multiply: {
            const auto& a = in(0);
            const auto& b = in(1);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = a[n.map_a[k]] * b[n.map_b[k]];
            break;
        }
        case Op::MatMul: {
            const auto& a = in(0);
            const auto& b = in(1);
            const std::size_t m = n.shape[0], p = n.shape[1];
            const std::size_t inner = nodes_[n.inputs[0]].shape[1];
            for (std::size_t i = 0; i < m; ++i) {
                double* row = &y[i * p];
                for (std::size_t k = 0; k < inner; ++k) {
                    const double aik = a[i * inner + k];
                    const double* brow = &b[k * p];
                    for (std::size_t j = 0; j < p; ++j) row[j] += aik * brow[j];
                }
            }
            break;
        }
        case Op::Conv2d: {
            const auto& x = in(0);
            const auto& k = in(1);
            const Shape& sx = nodes_[n.inputs[0]].shape;
            const Shape& sk = nodes_[n.inputs[1]].shape;
            const std::size_t oc = sk[0], ic = sk[1], kh = sk[2], kw = sk[3];
            const std::size_t h = sx[1], w = sx[2];
            const std::size_t oh = n.shape[1], ow = n.shape[2];
            for (std::size_t o = 0; o < oc; ++o) {
                const double b = n.inputs.size() > 2 ? in(2)[o] : 0.0;
                for (std::size_t r = 0; r < oh; ++r) {
                    for (std::size_t c = 0; c < ow; ++c) {
                        double acc = b;
                        for (std::size_t ch = 0; ch < ic; ++ch) {
                            for (std::size_t i = 0; i < kh; ++i) {
                                const double* xrow = &x[(ch * h + r + i) * w + c];
                                const double* krow = &k[((o * ic + ch) * kh + i) * kw];
                                for (std::size_t j = 0; j < kw; ++j) acc += xrow[j] * krow[j];
                            }
                        }
                        y[(o * oh + r) * ow + c] = acc;
                    }
                }
            }
            break;
        }
        case Op::Relu: {
            const auto& x = in(0);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
            break;
        }
        case Op::Tanh: {
            const auto& x = in(0);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::tanh(x[k]);
            break;
        }
        case Op::Sigmoid: {
            const auto& x = in(0);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = stable_sigmoid(x[k]);
            break;
        }
        case Op::Softmax: {
            const auto& x = in(0);
            const std::size_t cols = n.shape.back();
            for (std::size_t r = 0; r < y.size() / cols; ++r) {
                const double* xr = &x[r * cols];
                double* yr = &y[r * cols];
                const double mx = *std::max_element(xr, xr + cols);
                double z = 0.0;
                for (std::size_t j = 0; j < cols; ++j) z += (yr[j] = std::exp(xr[j] - mx));
                for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
            }
            break;
        }
        case Op::Concat: {
            const AxisSplit o = split_at(n.shape, n.axis);
            std::size_t offset = 0;
            for (std::size_t p = 0; p < n.inputs.size(); ++p) {
                const auto& x = in(p);
                const std::size_t ext = nodes_[n.inputs[p]].shape[n.axis];
                for (std::size_t a = 0; a < o.outer; ++a) {
                    std::copy_n(&x[a * ext * o.inner], ext * o.inner, &y[(a * o.extent + offset) * o.inner]);
                }
                offset += ext;
            }
            break;
        }
        case Op::Slice: {
            const auto& x = in(0);
            const AxisSplit s = split_at(nodes_[n.inputs[0]].shape, n.axis);
            const std::size_t ext = n.end - n.begin;
            for (std::size_t a = 0; a < s.outer; ++a) {
                std::copy_n(&x[(a * s.extent + n.begin) * s.inner], ext * s.inner, &y[a * ext * s.inner]);
            }
            break;
        }
        case Op::Sum: {
            const auto& x = in(0);
            if (n.shape == Shape{1} && n.axis == static_cast<std::size_t>(-1)) {
                double acc = 0.0;
                for (double v : x) acc += v;
                y[0] = acc;
            } else {
                const AxisSplit s = split_at(nodes_[n.inputs[0]].shape, n.axis);
                for (std::size_t a = 0; a < s.outer; ++a)
                    for (std::size_t e = 0; e < s.extent; ++e)
                        for (std::size_t i = 0; i < s.inner; ++i) y[a * s.inner + i] += x[(a * s.extent + e) * s.inner + i];
            }
            break;
        }
        case Op::Mean: {
            const auto& x = in(0);
            double acc = 0.0;
            for (double v : x) acc += v;
            y[0] = acc / static_cast<double>(x.size());
            break;
        }
        case Op::Log: {
            const auto& x = in(0);
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = std::log(x[k]);
            break;
        }
        case Op::Dropout: {
            const auto& x = in(0);
            n.mask.assign(y.size(), 1.0);
            if (options.train && n.rate > 0.0) {
                std::mt19937_64 rng(options.seed ^ (0x9E3779B97F4A7C15ull * (id + 1)));
                const double keep = 1.0 - n.rate;
                for (auto& m : n.mask) {
                    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                    m = u < keep ? 1.0 / keep : 0.0;
                }
            }
            for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] * n.mask[k];
            break;
        }
        case Op::Reshape: {
            y = in(0);
            break;
        }
        case Op::Input:
        case Op::Constant:
            break;
    }
    n.value = std::move(out);
}

TensorMap Graph::backward() {
    const std::size_t out = output().id;
    if (!evaluated_) throw ContractError("backward() called before forward()");
    if (nodes_[out].shape != Shape{1}) {
        throw ContractError("backward() needs a scalar output, got " + shape_string(nodes_[out].shape));
    }
    // Only nodes downstream of an input carry adjoints.
    std::vector<bool> live(nodes_.size(), false);
    for (std::size_t id = 0; id <= out; ++id) {
        const NodeData& n = nodes_[id];
        live[id] = n.op == Op::Input ||
                   std::any_of(n.inputs.begin(), n.inputs.end(), [&](std::size_t i) { return live[i]; });
    }
    std::vector<Tensor> adj(nodes_.size());
    for (std::size_t id = 0; id <= out; ++id) {
        if (live[id]) adj[id] = Tensor(nodes_[id].shape, 0.0);
    }
    adj[out][0] = 1.0;
    for (std::size_t id = out + 1; id-- > 0;) {
        if (live[id] && nodes_[id].op != Op::Input) accumulate(id, adj);
    }
    TensorMap grads;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].op == Op::Input) {
            grads[nodes_[id].name] = live[id] && id <= out ? std::move(adj[id]) : Tensor(nodes_[id].shape, 0.0);
        }
    }
    return grads;
}

void Graph::accumulate(std::size_t id, std::vector<Tensor>& adj) const {
    const NodeData& n = nodes_[id];
    const auto& g = adj[id].storage();
    const auto val = [&](std::size_t k) -> const std::vector<double>& { return nodes_[n.inputs[k]].value.storage(); };
    const auto grad = [&](std::size_t k) -> std::vector<double>* {
        Tensor& t = adj[n.inputs[k]];
        return t.size() ? &t.storage() : nullptr;
    };
    const auto& y = n.value.storage();

    switch (n.op) {
        case Op::Add: {
            if (auto* ga = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*ga)[n.map_a[k]] += g[k];
            if (auto* gb = grad(1))
                for (std::size_t k = 0; k < g.size(); ++k) (*gb)[n.map_b[k]] += g[k];
            break;
        }
        case Op::Multiply: {
            const auto& a = val(0);
            const auto& b = val(1);
            if (auto* ga = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*ga)[n.map_a[k]] += g[k] * b[n.map_b[k]];
            if (auto* gb = grad(1))
                for (std::size_t k = 0; k < g.size(); ++k) (*gb)[n.map_b[k]] += g[k] * a[n.map_a[k]];
            break;
        }
        case Op::MatMul: {
            const auto& a = val(0);
            const auto& b = val(1);
            const std::size_t m = n.shape[0], p = n.shape[1];
            const std::size_t inner = nodes_[n.inputs[0]].shape[1];
            if (auto* ga = grad(0)) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * b[k * p + j];
                        (*ga)[i * inner + k] += acc;
                    }
            }
            if (auto* gb = grad(1)) {
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                        const double aik = a[i * inner + k];
                        for (std::size_t j = 0; j < p; ++j) (*gb)[k * p + j] += aik * g[i * p + j];
                    }
            }
            break;
        }
        case Op::Conv2d: {
            const auto& x = val(0);
            const auto& k = val(1);
            const Shape& sx = nodes_[n.inputs[0]].shape;
            const Shape& sk = nodes_[n.inputs[1]].shape;
            const std::size_t oc = sk[0], ic = sk[1], kh = sk[2], kw = sk[3];
            const std::size_t h = sx[1], w = sx[2];
            const std::size_t oh = n.shape[1], ow = n.shape[2];
            auto* gx = grad(0);
            auto* gk = grad(1);
            auto* gbias = n.inputs.size() > 2 ? grad(2) : nullptr;
            for (std::size_t o = 0; o < oc; ++o)
                for (std::size_t r = 0; r < oh; ++r)
                    for (std::size_t c = 0; c < ow; ++c) {
                        const double go = g[(o * oh + r) * ow + c];
                        if (go == 0.0) continue;
                        if (gbias) (*gbias)[o] += go;
                        for (std::size_t ch = 0; ch < ic; ++ch)
                            for (std::size_t i = 0; i < kh; ++i) {
                                const std::size_t xo = (ch * h + r + i) * w + c;
                                const std::size_t ko = ((o * ic + ch) * kh + i) * kw;
                                for (std::size_t j = 0; j < kw; ++j) {
                                    if (gx) (*gx)[xo + j] += go * k[ko + j];
                                    if (gk) (*gk)[ko + j] += go * x[xo + j];
                                }
                            }
                    }
            break;
        }
        case Op::Relu: {
            const auto& x = val(0);
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += x[k] > 0.0 ? g[k] : 0.0;
            break;
        }
        case Op::Tanh: {
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k] * (1.0 - y[k] * y[k]);
            break;
        }
        case Op::Sigmoid: {
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k] * y[k] * (1.0 - y[k]);
            break;
        }
        case Op::Softmax: {
            if (auto* gx = grad(0)) {
                const std::size_t cols = n.shape.back();
                for (std::size_t r = 0; r < y.size() / cols; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
                    for (std::size_t j = 0; j < cols; ++j) (*gx)[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
                }
            }
            break;
        }
        case Op::Concat: {
            const AxisSplit o = split_at(n.shape, n.axis);
            std::size_t offset = 0;
            for (std::size_t p = 0; p < n.inputs.size(); ++p) {
                const std::size_t ext = nodes_[n.inputs[p]].shape[n.axis];
                if (auto* gp = grad(p)) {
                    for (std::size_t a = 0; a < o.outer; ++a)
                        for (std::size_t e = 0; e < ext * o.inner; ++e)
                            (*gp)[a * ext * o.inner + e] += g[(a * o.extent + offset) * o.inner + e];
                }
                offset += ext;
            }
            break;
        }
        case Op::Slice: {
            if (auto* gx = grad(0)) {
                const AxisSplit s = split_at(nodes_[n.inputs[0]].shape, n.axis);
                const std::size_t ext = n.end - n.begin;
                for (std::size_t a = 0; a < s.outer; ++a)
                    for (std::size_t e = 0; e < ext * s.inner; ++e)
                        (*gx)[(a * s.extent + n.begin) * s.inner + e] += g[a * ext * s.inner + e];
            }
            break;
        }
        case Op::Sum: {
            if (auto* gx = grad(0)) {
                if (n.axis == static_cast<std::size_t>(-1)) {
                    for (auto& v : *gx) v += g[0];
                } else {
                    const AxisSplit s = split_at(nodes_[n.inputs[0]].shape, n.axis);
                    for (std::size_t a = 0; a < s.outer; ++a)
                        for (std::size_t e = 0; e < s.extent; ++e)
                            for (std::size_t i = 0; i < s.inner; ++i) (*gx)[(a * s.extent + e) * s.inner + i] += g[a * s.inner + i];
                }
            }
            break;
        }
        case Op::Mean: {
            if (auto* gx = grad(0)) {
                const double share = g[0] / static_cast<double>(gx->size());
                for (auto& v : *gx) v += share;
            }
            break;
        }
        case Op::Log: {
            const auto& x = val(0);
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k] / x[k];
            break;
        }
        case Op::Dropout: {
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k] * n.mask[k];
            break;
        }
        case Op::Reshape: {
            if (auto* gx = grad(0))
                for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k];
            break;
        }
        case Op::Input:
        case Op::Constant:
            break;
    }
}

std::vector<bool> Graph::relu_signature() const {
    std::vector<bool> sig;
    for (const auto& n : nodes_) {
        if (n.op != Op::Relu) continue;
        for (double v : nodes_[n.inputs[0]].value.storage()) sig.push_back(v > 0.0);
    }
    return sig;
}

}  // namespace rlalloc::nn
