#include "dhvae/graph.hpp"

#include <cmath>

#include "dhvae/errors.hpp"

namespace dhvae {

namespace {
Graph& same_graph(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.g != b.g)
        throw ShapeError("op operands must belong to the same graph");
    return *a.g;
}
Graph& own_graph(Var a) {
    if (!a.valid()) throw ShapeError("invalid Var");
    return *a.g;
}
}  // namespace

Var Graph::leaf(Tensor value, bool requires_grad) {
    // differentiation targets are declared via the wrt set at gradients()
    // time; a leaf carries no flag of its own
    (void)requires_grad;
    nodes_.push_back(Node{Op::leaf, -1, -1, std::move(value), {}});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
const Shape& Graph::shape(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value.shape(); }

Var Graph::emit(Op op, Var a, Var b, Tensor value, OpAttrs attrs) {
    nodes_.push_back(Node{op, a.valid() ? a.id : -1, b.valid() ? b.id : -1, std::move(value), std::move(attrs)});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

// --- forward op constructors -----------------------------------------------------

Var add(Var a, Var b) {
    Graph& g = same_graph(a, b);
    return g.emit(Op::add, a, b, add(g.value(a), g.value(b)));
}
Var sub(Var a, Var b) {
    Graph& g = same_graph(a, b);
    return g.emit(Op::sub, a, b, sub(g.value(a), g.value(b)));
}
Var mul(Var a, Var b) {
    Graph& g = same_graph(a, b);
    return g.emit(Op::mul, a, b, mul(g.value(a), g.value(b)));
}
Var div(Var a, Var b) {
    Graph& g = same_graph(a, b);
    return g.emit(Op::divide, a, b, div(g.value(a), g.value(b)));
}
Var neg(Var a) {
    Graph& g = own_graph(a);
    return g.emit(Op::neg, a, {}, neg(g.value(a)));
}
Var vexp(Var a) {
    Graph& g = own_graph(a);
    return g.emit(Op::vexp, a, {}, exp(g.value(a)));
}
Var vlog(Var a) {
    Graph& g = own_graph(a);
    return g.emit(Op::vlog, a, {}, log(g.value(a)));
}
Var vsqrt(Var a) {
    Graph& g = own_graph(a);
    return g.emit(Op::vsqrt, a, {}, sqrt(g.value(a)));
}
Var vsigmoid(Var a) {
    Graph& g = own_graph(a);
    return g.emit(Op::vsigmoid, a, {}, sigmoid(g.value(a)));
}
Var swish(Var a) { return mul(a, vsigmoid(a)); }
Var leaky_relu(Var a, double slope) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.lo = slope;
    return g.emit(Op::vlrelu, a, {}, leaky_relu(g.value(a), slope), std::move(at));
}
Var relu(Var a) { return leaky_relu(a, 0.0); }
Var clamp(Var a, double lo, double hi) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.lo = lo;
    at.hi = hi;
    return g.emit(Op::vclamp, a, {}, clamp(g.value(a), lo, hi), std::move(at));
}
Var matmul(Var a, Var b, bool ta, bool tb) {
    Graph& g = same_graph(a, b);
    OpAttrs at;
    at.ta = ta;
    at.tb = tb;
    return g.emit(Op::mm, a, b, matmul(g.value(a), g.value(b), ta, tb), std::move(at));
}
Var reshape(Var a, Shape shape) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.shape = shape;
    return g.emit(Op::reshape, a, {}, g.value(a).reshaped(shape), std::move(at));
}
Var permute3(Var a, int p0, int p1, int p2) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.p0 = p0; at.p1 = p1; at.p2 = p2;
    return g.emit(Op::perm3, a, {}, permute3(g.value(a), p0, p1, p2), std::move(at));
}
Var broadcast_to(Var a, Shape shape) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.shape = shape;
    return g.emit(Op::bcast, a, {}, broadcast_to(g.value(a), shape), std::move(at));
}
Var reduce_sum_to(Var a, Shape shape) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.shape = shape;
    return g.emit(Op::rsum, a, {}, reduce_sum_to(g.value(a), shape), std::move(at));
}
Var sum_all(Var a) { return reduce_sum_to(a, Shape{1}); }
Var mean_all(Var a) {
    Graph& g = own_graph(a);
    const double inv = 1.0 / static_cast<double>(g.value(a).numel());
    return mul(sum_all(a), g.constant(inv));
}
Var im2col(Var x, const Conv2dSpec& spec) {
    Graph& g = own_graph(x);
    OpAttrs at;
    at.conv = spec;
    at.shape = g.shape(x);  // keep the source shape for the backward col2im
    return g.emit(Op::im2col_op, x, {}, im2col(g.value(x), spec), std::move(at));
}
Var col2im(Var cols, const Conv2dSpec& spec, Shape x_shape) {
    Graph& g = own_graph(cols);
    OpAttrs at;
    at.conv = spec;
    at.shape = x_shape;
    return g.emit(Op::col2im_op, cols, {}, col2im(g.value(cols), spec, x_shape), std::move(at));
}
Var conv2d(Var x, Var w, const Conv2dSpec& spec) {
    Graph& g = same_graph(x, w);
    OpAttrs at;
    at.conv = spec;
    return g.emit(Op::conv, x, w, conv2d(g.value(x), g.value(w), spec), std::move(at));
}
Var concat_ch(Var a, Var b) {
    Graph& g = same_graph(a, b);
    return g.emit(Op::catc, a, b, concat_ch(g.value(a), g.value(b)));
}
Var slice_ch(Var a, std::int64_t c0, std::int64_t c1) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.c0 = c0; at.c1 = c1;
    return g.emit(Op::slicec, a, {}, slice_ch(g.value(a), c0, c1), std::move(at));
}
Var pad_ch(Var a, std::int64_t before, std::int64_t after) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.c0 = before; at.c1 = after;
    return g.emit(Op::padc, a, {}, pad_ch(g.value(a), before, after), std::move(at));
}
Var upsample_nearest2(Var a) {
    Graph& g = own_graph(a);
    const Shape& s = g.shape(a);
    if (s.size() != 4) throw ShapeError("upsample_nearest2 expects NCHW");
    const std::int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    Var r = reshape(a, {N, C, H, 1, W, 1});
    Var b = broadcast_to(r, {N, C, H, 2, W, 2});
    return reshape(b, {N, C, 2 * H, 2 * W});
}
Var maxpool2(Var a) {
    Graph& g = own_graph(a);
    OpAttrs at;
    at.idx = std::make_shared<std::vector<std::int64_t>>();
    at.shape = g.shape(a);
    Tensor v = maxpool2(g.value(a), *at.idx);
    return g.emit(Op::pool, a, {}, std::move(v), std::move(at));
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator*(double s, Var a) { return mul(own_graph(a).constant(s), a); }
Var operator+(Var a, double s) { return add(a, own_graph(a).constant(s)); }
Var operator-(Var a, double s) { return add(a, own_graph(a).constant(-s)); }

Var scalar(Graph& g, double v) { return g.constant(v); }

// --- backward ---------------------------------------------------------------------

std::vector<Var> Graph::gradients(Var loss, const std::vector<Var>& wrt) {
    if (!loss.valid() || loss.g != this) throw ShapeError("gradients: loss not on this graph");
    if (value(loss).numel() != 1) throw ShapeError("gradients: loss must be scalar");
    const std::size_t n = static_cast<std::size_t>(loss.id) + 1;

    // needs[i]: node i depends on (or is) a wrt node
    std::vector<char> needs(n, 0);
    for (Var w : wrt) {
        if (!w.valid() || w.g != this) throw ShapeError("gradients: wrt var not on this graph");
        if (static_cast<std::size_t>(w.id) < n) needs[static_cast<std::size_t>(w.id)] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes_[i];
        if (nd.a >= 0 && needs[static_cast<std::size_t>(nd.a)]) needs[i] = 1;
        if (nd.b >= 0 && needs[static_cast<std::size_t>(nd.b)]) needs[i] = 1;
    }

    // active[i]: node i contributes to loss through needs-nodes
    std::vector<char> active(n, 0);
    active[static_cast<std::size_t>(loss.id)] = 1;
    for (std::size_t i = n; i-- > 0;) {
        if (!active[i] || !needs[i]) continue;
        const Node& nd = nodes_[i];
        if (nd.a >= 0 && needs[static_cast<std::size_t>(nd.a)]) active[static_cast<std::size_t>(nd.a)] = 1;
        if (nd.b >= 0 && needs[static_cast<std::size_t>(nd.b)]) active[static_cast<std::size_t>(nd.b)] = 1;
    }

    std::vector<Var> grad(n);
    auto accumulate = [&](std::int32_t id, Var gv) {
        auto& slot = grad[static_cast<std::size_t>(id)];
        slot = slot.valid() ? add(slot, gv) : gv;
    };
    grad[static_cast<std::size_t>(loss.id)] = leaf(Tensor::full({1}, 1.0));

    for (std::size_t i = n; i-- > 0;) {
        if (!active[i] || !needs[i] || !grad[i].valid()) continue;
        const Var gy = grad[i];
        // copy out what the vjp needs; emitting ops can reallocate nodes_
        const Op op = nodes_[i].op;
        const std::int32_t ia = nodes_[i].a, ib = nodes_[i].b;
        const OpAttrs attrs = nodes_[i].attrs;
        const Var y{this, static_cast<std::int32_t>(i)};
        const Var a{this, ia}, b{this, ib};
        const bool wa = ia >= 0 && needs[static_cast<std::size_t>(ia)] && active[static_cast<std::size_t>(ia)];
        const bool wb = ib >= 0 && needs[static_cast<std::size_t>(ib)] && active[static_cast<std::size_t>(ib)];
        if (!wa && !wb) continue;
        switch (op) {
            case Op::leaf:
                break;
            case Op::add:
                if (wa) accumulate(ia, reduce_sum_to(gy, shape(a)));
                if (wb) accumulate(ib, reduce_sum_to(gy, shape(b)));
                break;
            case Op::sub:
                if (wa) accumulate(ia, reduce_sum_to(gy, shape(a)));
                if (wb) accumulate(ib, reduce_sum_to(neg(gy), shape(b)));
                break;
            case Op::mul:
                if (wa) accumulate(ia, reduce_sum_to(mul(gy, b), shape(a)));
                if (wb) accumulate(ib, reduce_sum_to(mul(gy, a), shape(b)));
                break;
            case Op::divide:
                if (wa) accumulate(ia, reduce_sum_to(div(gy, b), shape(a)));
                if (wb) accumulate(ib, reduce_sum_to(neg(div(mul(gy, y), b)), shape(b)));
                break;
            case Op::neg:
                if (wa) accumulate(ia, neg(gy));
                break;
            case Op::vexp:
                if (wa) accumulate(ia, mul(gy, y));
                break;
            case Op::vlog:
                if (wa) accumulate(ia, div(gy, a));
                break;
            case Op::vsqrt:
                if (wa) accumulate(ia, div(mul(constant(0.5), gy), y));
                break;
            case Op::vsigmoid:
                if (wa) accumulate(ia, mul(mul(gy, y), sub(constant(1.0), y)));
                break;
            case Op::vlrelu:
                if (wa) {
                    Tensor m(shape(a));
                    const Tensor& av = value(a);
                    for (std::int64_t j = 0; j < m.numel(); ++j) m[j] = av[j] > 0.0 ? 1.0 : attrs.lo;
                    accumulate(ia, mul(gy, leaf(std::move(m))));
                }
                break;
            case Op::vclamp:
                if (wa) {
                    Tensor m(shape(a));
                    const Tensor& av = value(a);
                    for (std::int64_t j = 0; j < m.numel(); ++j)
                        m[j] = (av[j] >= attrs.lo && av[j] <= attrs.hi) ? 1.0 : 0.0;
                    accumulate(ia, mul(gy, leaf(std::move(m))));
                }
                break;
            case Op::mm: {
                const bool ta = attrs.ta, tb = attrs.tb;
                if (!ta && !tb) {
                    if (wa) accumulate(ia, matmul(gy, b, false, true));
                    if (wb) accumulate(ib, matmul(a, gy, true, false));
                } else if (ta && !tb) {
                    if (wa) accumulate(ia, matmul(b, gy, false, true));
                    if (wb) accumulate(ib, matmul(a, gy, false, false));
                } else if (!ta && tb) {
                    if (wa) accumulate(ia, matmul(gy, b, false, false));
                    if (wb) accumulate(ib, matmul(gy, a, true, false));
                } else {
                    if (wa) accumulate(ia, matmul(b, gy, true, true));
                    if (wb) accumulate(ib, matmul(gy, a, true, true));
                }
                break;
            }
            case Op::reshape:
                if (wa) accumulate(ia, reshape(gy, shape(a)));
                break;
            case Op::perm3: {
                if (wa) {
                    int inv[3];
                    inv[attrs.p0] = 0; inv[attrs.p1] = 1; inv[attrs.p2] = 2;
                    accumulate(ia, permute3(gy, inv[0], inv[1], inv[2]));
                }
                break;
            }
            case Op::bcast:
                if (wa) accumulate(ia, reduce_sum_to(gy, shape(a)));
                break;
            case Op::rsum:
                if (wa) accumulate(ia, broadcast_to(gy, shape(a)));
                break;
            case Op::im2col_op:
                if (wa) accumulate(ia, col2im(gy, attrs.conv, attrs.shape));
                break;
            case Op::col2im_op:
                if (wa) accumulate(ia, im2col(gy, attrs.conv));
                break;
            case Op::conv: {
                // copies: emitting ops below reallocates node storage
                const Shape xs = shape(a);
                const Shape ws = shape(b);
                const std::int64_t N = xs[0], Cout = ws[0];
                const std::int64_t ckk = ws[1] * ws[2] * ws[3];
                const std::int64_t P = attrs.conv.out_h(xs[2]) * attrs.conv.out_w(xs[3]);
                Var gm = reshape(permute3(reshape(gy, {N, Cout, P}), 1, 0, 2), {Cout, N * P});
                if (wa) {
                    Var w2 = reshape(b, {Cout, ckk});
                    accumulate(ia, col2im(matmul(w2, gm, true, false), attrs.conv, xs));
                }
                if (wb) {
                    Var cols = im2col(a, attrs.conv);
                    accumulate(ib, reshape(matmul(gm, cols, false, true), ws));
                }
                break;
            }
            case Op::catc: {
                const std::int64_t ca = shape(a)[1];
                if (wa) accumulate(ia, slice_ch(gy, 0, ca));
                if (wb) accumulate(ib, slice_ch(gy, ca, ca + shape(b)[1]));
                break;
            }
            case Op::slicec:
                if (wa) accumulate(ia, pad_ch(gy, attrs.c0, shape(a)[1] - attrs.c1));
                break;
            case Op::padc:
                if (wa) accumulate(ia, slice_ch(gy, attrs.c0, attrs.c0 + shape(a)[1]));
                break;
            case Op::pool:
                if (wa) {
                    OpAttrs at2;
                    at2.idx = attrs.idx;
                    at2.shape = attrs.shape;
                    accumulate(ia, emit(Op::unpool, gy, {}, maxunpool2(value(gy), *attrs.idx, attrs.shape), std::move(at2)));
                }
                break;
            case Op::unpool:
                if (wa) {
                    OpAttrs at2;
                    at2.idx = attrs.idx;
                    at2.shape = shape(a);
                    accumulate(ia, emit(Op::gather, gy, {}, gather_flat(value(gy), *attrs.idx, shape(a)), std::move(at2)));
                }
                break;
            case Op::gather:
                if (wa) {
                    OpAttrs at2;
                    at2.idx = attrs.idx;
                    at2.shape = shape(a);
                    accumulate(ia, emit(Op::unpool, gy, {}, maxunpool2(value(gy), *attrs.idx, shape(a)), std::move(at2)));
                }
                break;
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (Var w : wrt) {
        Var gv = grad[static_cast<std::size_t>(w.id)];
        if (!gv.valid()) gv = leaf(Tensor(shape(w)));
        out.push_back(gv);
    }
    return out;
}

}  // namespace dhvae
