#pragma once

#include "headswap/nn/tensor.hpp"

#include <functional>
#include <vector>

namespace headswap::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var
{
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/**
 * Reverse-mode tape. Nodes are appended in evaluation order, which is a
 * topological order of the graph, so backward() walks the tape in reverse and
 * visits each node exactly once.
 */
class Tape
{
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var constant(Tensor value);
    /// Leaf bound to `p`; backward() accumulates into p.grad when p is trainable.
    Var param(Parameter& p);
    /// Leaf whose gradient is kept on the tape (for probes such as d loss / d input).
    Var input(Tensor value);

    Var record(Tensor value, std::vector<int> parents, BackwardFn fn);

    /// Seeds d loss / d loss = 1 and propagates. Throws if loss is not a scalar.
    void backward(Var loss);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    /// Gradient of the last backward() loss with respect to node `v`.
    const Tensor& grad(Var v) const;
    Tensor& grad_ref(int id);
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node
    {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// Elementwise (same shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var tanh(Var a);
Var sigmoid(Var a);
Var sqrt(Var a);
/// 1 / sqrt(a + eps).
Var rsqrt(Var a, double eps);
/// Gradient is passed only strictly inside (lo, hi).
Var clamp(Var a, double lo, double hi);

// Reductions to shape {1}.
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
Var l1_loss(Var a, Var b);
Var mse_loss(Var a, Var b);

/// Elementwise mean of same-shape tensors. Each element is summed in ascending
/// value order, so the result does not depend on the order of `parts`.
Var average(const std::vector<Var>& parts);

// Linear algebra.
Var matmul(Var a, Var b); // {m,k} x {k,n}
Var reshape(Var a, Shape shape);

// Images are {C, H, W}.
Var conv2d(Var x, Var weight, Var bias, int stride = 1); // weight {O, C, k, k}, k odd, zero "same" padding
Var upsample2x(Var x);
Var channel_mean(Var x);              // -> {C}
Var channel_var(Var x);               // population variance -> {C}
Var sub_channel(Var x, Var v);        // x[c] - v[c]
Var mul_channel(Var x, Var v);        // x[c] * v[c]
Var add_channel(Var x, Var v);        // x[c] + v[c]
Var concat(const std::vector<Var>& parts); // along axis 0
Var slice(Var x, int start, int count);    // along axis 0
Var crop(Var x, int top, int left, int height, int width);
Var resize_bilinear(Var x, int height, int width);

} // namespace headswap::nn
