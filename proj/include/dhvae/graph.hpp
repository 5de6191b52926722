#pragma once

// Define-by-run reverse-mode autodiff over Tensor. Every node's value is
// computed eagerly when the op is recorded. Backward passes emit ordinary
// graph ops rather than raw tensors, so gradients are themselves
// differentiable — the training objective needs d(loss)/d(params) through
// expressions that already contain d(potential)/d(z).
//
// Graphs are built per iteration and dropped afterwards; parameters live
// outside as Tensors and enter as leaves.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "dhvae/tensor.hpp"

namespace dhvae {

class Graph;

struct Var {
    Graph* g = nullptr;
    std::int32_t id = -1;
    bool valid() const { return g != nullptr && id >= 0; }
};

enum class Op : std::uint8_t {
    leaf,
    add, sub, mul, divide, neg,
    vexp, vlog, vsqrt, vsigmoid, vlrelu, vclamp,
    mm,                 // matmul with transpose flags
    reshape, perm3,
    bcast, rsum,        // broadcast_to / reduce_sum_to
    im2col_op, col2im_op, conv,
    catc, slicec, padc, // channel concat / slice / zero-pad
    pool, unpool, gather,
};

struct OpAttrs {
    bool ta = false, tb = false;        // mm
    double lo = 0.0, hi = 0.0;          // clamp / lrelu slope in lo
    int p0 = 0, p1 = 1, p2 = 2;         // perm3
    Shape shape;                        // reshape/bcast/rsum target, col2im/unpool x-shape
    Conv2dSpec conv;                    // conv-family ops
    std::shared_ptr<std::vector<std::int64_t>> idx;  // pool argmax indices
    std::int64_t c0 = 0, c1 = 0;        // slicec range / padc amounts
};

class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(double v) { return leaf(Tensor::scalar(v), false); }

    const Tensor& value(Var v) const;
    const Shape& shape(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // d(loss)/d(each of wrt); loss must be scalar (numel 1). Entries of wrt
    // that loss does not depend on get a zero leaf. The returned Vars are
    // ordinary graph nodes and can be differentiated again.
    std::vector<Var> gradients(Var loss, const std::vector<Var>& wrt);

    // --- op constructors (free-function wrappers below call these) ---
    Var emit(Op op, Var a, Var b, Tensor value, OpAttrs attrs = {});

  private:
    struct Node {
        Op op;
        std::int32_t a = -1, b = -1;
        Tensor value;
        OpAttrs attrs;
    };
    std::vector<Node> nodes_;
    friend std::vector<Var> graph_backward(Graph&, Var, const std::vector<Var>&);
};

// --- op API --------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var vexp(Var a);
Var vlog(Var a);
Var vsqrt(Var a);
Var vsigmoid(Var a);
Var swish(Var a);                       // x * sigmoid(x)
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var matmul(Var a, Var b, bool ta = false, bool tb = false);
Var reshape(Var a, Shape shape);
Var permute3(Var a, int p0, int p1, int p2);
Var broadcast_to(Var a, Shape shape);
Var reduce_sum_to(Var a, Shape shape);
Var sum_all(Var a);                     // shape {1}
Var mean_all(Var a);
Var im2col(Var x, const Conv2dSpec& spec);
Var col2im(Var cols, const Conv2dSpec& spec, Shape x_shape);
Var conv2d(Var x, Var w, const Conv2dSpec& spec);
Var concat_ch(Var a, Var b);
Var slice_ch(Var a, std::int64_t c0, std::int64_t c1);
Var pad_ch(Var a, std::int64_t before, std::int64_t after);
Var upsample_nearest2(Var a);           // composed from reshape/broadcast
Var maxpool2(Var a);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a, double s);

// Convenience: scalar constant on a graph.
Var scalar(Graph& g, double v);

}  // namespace dhvae
