#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowfuse/tensor.hpp"

namespace flowfuse {

class Tape;

// Handle to a node on a tape. Copyable, trivially small.
struct Var {
    Tape* tape = nullptr;
    uint32_t index = 0;

    const Tensor& value() const;
    bool requires_grad() const;
};

// Backward closure contract: accumulate (never overwrite) into the non-null
// entries of parent_grads. parent_values and parent_grads are index-aligned
// with the parents passed at node creation; a null grad slot means that
// parent does not participate in differentiation.
using BackwardFn = std::function<void(const Tensor& out_grad, const Tensor& out_value,
                                      const std::vector<const Tensor*>& parent_values,
                                      const std::vector<Tensor*>& parent_grads)>;

// Gradients produced by one backward pass. Nodes the loss never touched
// report zeros of their value's shape.
class GradMap {
  public:
    GradMap(const Tape* tape, std::vector<std::optional<Tensor>> grads)
        : tape_(tape), grads_(std::move(grads)) {}

    Tensor grad(Var v) const;
    // Null when the node was never touched; avoids materializing zeros.
    const Tensor* maybe_grad(Var v) const;

  private:
    const Tape* tape_;
    std::vector<std::optional<Tensor>> grads_;
};

// Records a forward computation; backward() replays it in reverse. All
// arithmetic is double precision. Parents always precede children, so
// descending node order is a valid reverse topological order.
class Tape {
  public:
    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

    // Custom-op entry point: the caller supplies the forward value and the
    // backward closure. Built-in ops below are thin wrappers over this.
    Var make_node(const char* name, Tensor value, const std::vector<Var>& parents,
                  BackwardFn backward);

    // root must be scalar; seeds d(root)/d(root) = 1.
    GradMap backward(Var root) const;

    const Tensor& value(Var v) const;
    bool node_requires_grad(Var v) const;
    size_t size() const { return nodes_.size(); }
    void clear();

  private:
    struct Node {
        Tensor value;
        std::vector<uint32_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;

    friend class GradMap;
};

// Elementwise binary ops broadcast singleton axes (or a rank-0 operand).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);

// Reductions to rank-0.
Var sum(Var a);
Var mean(Var a);
Var l2_norm_sq(Var a);
Var l1_norm(Var a);

// mean((a - b)^2) over all elements.
Var mse_loss(Var a, Var b);

// 2-D convolution over [Cin,H,W] with kernel [Cout,Cin,kh,kw] (odd kh, kw),
// stride 1, zero padding preserving H and W. bias is [Cout] or an invalid
// Var for none.
Var conv2d(Var x, Var kernel, Var bias);
Var conv2d(Var x, Var kernel);

Var avg_pool2(Var x);
Var upsample_nearest2(Var x);

// Concatenates rank-3 inputs along the band axis.
Var concat_bands(const std::vector<Var>& parts);
// out[b] = x[start + b] for count bands.
Var slice_bands(Var x, int start, int count);

// Softmax over a rank-1 vector.
Var softmax(Var logits);

// weights[c] collapses cube [C,H,W] to [H,W]: out = sum_c w_c * cube_c.
Var spectral_project(Var cube, Var weights);

Var reshape(Var x, std::vector<int> new_shape);

}  // namespace flowfuse
