#include "dhvae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dhvae/errors.hpp"
#include "dhvae/kernels.hpp"

namespace dhvae {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    for (auto d : shape_)
        if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + shape_str(shape_));
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel())
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) + " changes element count");
    return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : data_) m = std::max(m, v);
    return m;
}

// --- broadcasting machinery ---------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    Shape out(static_cast<std::size_t>(r));
    for (int d = 0; d < r; ++d) {
        const std::int64_t ad = d < r - ra ? 1 : a[static_cast<std::size_t>(d - (r - ra))];
        const std::int64_t bd = d < r - rb ? 1 : b[static_cast<std::size_t>(d - (r - rb))];
        if (ad != bd && ad != 1 && bd != 1)
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[static_cast<std::size_t>(d)] = std::max(ad, bd);
    }
    return out;
}

namespace {

// Dim of `s` aligned (from the right) against a rank-r output; missing
// leading dims count as 1.
inline std::int64_t aligned_dim(const Shape& s, int r, int d) {
    const int rs = static_cast<int>(s.size());
    return d < r - rs ? 1 : s[static_cast<std::size_t>(d - (r - rs))];
}

struct BinPlan {
    std::int64_t inner = 1;       // trailing block size
    bool a_contig = true;         // over the inner block: contiguous vs single value
    bool b_contig = true;
    Shape outer_dims;             // remaining leading dims of the output
    std::vector<std::int64_t> a_stride, b_stride;  // strides over outer dims (0 when broadcast)
};

BinPlan make_bin_plan(const Shape& a, const Shape& b, const Shape& out) {
    const int r = static_cast<int>(out.size());
    BinPlan plan;
    bool a_match = true, a_one = true, b_match = true, b_one = true;
    int d = r - 1;
    for (; d >= 0; --d) {
        const std::int64_t od = out[static_cast<std::size_t>(d)];
        const std::int64_t ad = aligned_dim(a, r, d);
        const std::int64_t bd = aligned_dim(b, r, d);
        const bool am = a_match && (ad == od), ao = a_one && (ad == 1);
        const bool bm = b_match && (bd == od), bo = b_one && (bd == 1);
        if ((am || ao) && (bm || bo)) {
            a_match = am; a_one = ao; b_match = bm; b_one = bo;
            plan.inner *= od;
        } else {
            break;
        }
    }
    plan.a_contig = a_match;
    plan.b_contig = b_match;
    // strides of a/b over the outer dims
    std::int64_t sa = a_match ? plan.inner : 1;
    std::int64_t sb = b_match ? plan.inner : 1;
    plan.outer_dims.assign(out.begin(), out.begin() + (d + 1));
    plan.a_stride.assign(static_cast<std::size_t>(d + 1), 0);
    plan.b_stride.assign(static_cast<std::size_t>(d + 1), 0);
    for (int k = d; k >= 0; --k) {
        const std::int64_t ad = aligned_dim(a, r, k);
        const std::int64_t bd = aligned_dim(b, r, k);
        plan.a_stride[static_cast<std::size_t>(k)] = ad == 1 ? 0 : sa;
        plan.b_stride[static_cast<std::size_t>(k)] = bd == 1 ? 0 : sb;
        sa *= ad;
        sb *= bd;
    }
    return plan;
}

template <typename RunOp, typename ScalOp>
void for_each_run(const Tensor& a, const Tensor& b, Tensor& out, const BinPlan& plan,
                  RunOp run_op, ScalOp scal_op) {
    const std::size_t n_outer = plan.outer_dims.size();
    std::vector<std::int64_t> idx(n_outer, 0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = out.data();
    std::int64_t offa = 0, offb = 0, offc = 0;
    for (;;) {
        if (plan.a_contig && plan.b_contig) {
            run_op(pa + offa, pb + offb, pc + offc, static_cast<std::size_t>(plan.inner));
        } else {
            scal_op(pa + offa, plan.a_contig, pb + offb, plan.b_contig, pc + offc,
                    static_cast<std::size_t>(plan.inner));
        }
        offc += plan.inner;
        // advance the outer multi-index
        int k = static_cast<int>(n_outer) - 1;
        for (; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)]++;
            offa += plan.a_stride[static_cast<std::size_t>(k)];
            offb += plan.b_stride[static_cast<std::size_t>(k)];
            if (idx[static_cast<std::size_t>(k)] < plan.outer_dims[static_cast<std::size_t>(k)]) break;
            offa -= plan.a_stride[static_cast<std::size_t>(k)] * plan.outer_dims[static_cast<std::size_t>(k)];
            offb -= plan.b_stride[static_cast<std::size_t>(k)] * plan.outer_dims[static_cast<std::size_t>(k)];
            idx[static_cast<std::size_t>(k)] = 0;
        }
        if (k < 0) break;
    }
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        const auto& kt = kernels::active();
        const std::size_t n = static_cast<std::size_t>(a.numel());
        switch (op) {
            case BinOp::add: kt.add(a.data(), b.data(), out.data(), n); break;
            case BinOp::sub: kt.sub(a.data(), b.data(), out.data(), n); break;
            case BinOp::mul: kt.mul(a.data(), b.data(), out.data(), n); break;
            case BinOp::div: kt.div(a.data(), b.data(), out.data(), n); break;
        }
        return out;
    }
    const Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor out(os);
    const BinPlan plan = make_bin_plan(a.shape(), b.shape(), os);
    const auto& kt = kernels::active();
    auto run = [&](const double* x, const double* y, double* z, std::size_t n) {
        switch (op) {
            case BinOp::add: kt.add(x, y, z, n); break;
            case BinOp::sub: kt.sub(x, y, z, n); break;
            case BinOp::mul: kt.mul(x, y, z, n); break;
            case BinOp::div: kt.div(x, y, z, n); break;
        }
    };
    auto scal = [&](const double* x, bool xc, const double* y, bool yc, double* z, std::size_t n) {
        // one side is a single broadcast value over the run
        switch (op) {
            case BinOp::add:
                if (xc) { const double v = *y; for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + v; }
                else if (yc) { const double v = *x; for (std::size_t i = 0; i < n; ++i) z[i] = v + y[i]; }
                else { const double v = *x + *y; for (std::size_t i = 0; i < n; ++i) z[i] = v; }
                break;
            case BinOp::sub:
                if (xc) { const double v = *y; for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - v; }
                else if (yc) { const double v = *x; for (std::size_t i = 0; i < n; ++i) z[i] = v - y[i]; }
                else { const double v = *x - *y; for (std::size_t i = 0; i < n; ++i) z[i] = v; }
                break;
            case BinOp::mul:
                if (xc) { const double v = *y; for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * v; }
                else if (yc) { const double v = *x; for (std::size_t i = 0; i < n; ++i) z[i] = v * y[i]; }
                else { const double v = *x * *y; for (std::size_t i = 0; i < n; ++i) z[i] = v; }
                break;
            case BinOp::div:
                if (xc) { const double v = *y; for (std::size_t i = 0; i < n; ++i) z[i] = x[i] / v; }
                else if (yc) { const double v = *x; for (std::size_t i = 0; i < n; ++i) z[i] = v / y[i]; }
                else { const double v = *x / *y; for (std::size_t i = 0; i < n; ++i) z[i] = v; }
                break;
        }
    };
    for_each_run(a, b, out, plan, run, scal);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div); }

namespace {
template <typename F>
Tensor unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    const double* x = a.data();
    double* y = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
    return out;
}
}  // namespace

Tensor neg(const Tensor& a) { return unary(a, [](double v) { return -v; }); }
Tensor exp(const Tensor& a) { return unary(a, [](double v) { return std::exp(v); }); }
Tensor log(const Tensor& a) { return unary(a, [](double v) { return std::log(v); }); }
Tensor sqrt(const Tensor& a) { return unary(a, [](double v) { return std::sqrt(v); }); }
Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
}
Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(a, [slope](double v) { return v > 0.0 ? v : slope * v; });
}
Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(a, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); });
}
Tensor add_scalar(const Tensor& a, double v) { return unary(a, [v](double x) { return x + v; }); }
Tensor mul_scalar(const Tensor& a, double v) { return unary(a, [v](double x) { return x * v; }); }

Tensor broadcast_to(const Tensor& a, const Shape& target) {
    const int r = static_cast<int>(target.size());
    if (static_cast<int>(a.shape().size()) > r)
        throw ShapeError("broadcast_to " + shape_str(a.shape()) + " -> " + shape_str(target) + ": rank decreases");
    for (int d = 0; d < r; ++d) {
        const std::int64_t ad = aligned_dim(a.shape(), r, d);
        if (ad != target[static_cast<std::size_t>(d)] && ad != 1)
            throw ShapeError("broadcast_to " + shape_str(a.shape()) + " -> " + shape_str(target));
    }
    if (a.shape() == target) return a;
    // implement as a + zeros(target)
    Tensor z(target);
    return add(a, z);
}

Tensor reduce_sum_to(const Tensor& a, const Shape& target) {
    const int r = a.rank();
    if (static_cast<int>(target.size()) > r)
        throw ShapeError("reduce_sum_to " + shape_str(a.shape()) + " -> " + shape_str(target) + ": rank increases");
    for (int d = 0; d < r; ++d) {
        const std::int64_t td = aligned_dim(target, r, d);
        if (td != a.shape()[static_cast<std::size_t>(d)] && td != 1)
            throw ShapeError("reduce_sum_to " + shape_str(a.shape()) + " -> " + shape_str(target));
    }
    if (a.shape() == target) return a;
    Tensor out(target);
    // trailing block over which target is uniformly matching or uniformly 1
    bool t_match = true, t_one = true;
    std::int64_t inner = 1;
    int d = r - 1;
    for (; d >= 0; --d) {
        const std::int64_t ad = a.shape()[static_cast<std::size_t>(d)];
        const std::int64_t td = aligned_dim(target, r, d);
        const bool tm = t_match && (td == ad), to = t_one && (td == 1);
        if (tm || to) {
            t_match = tm; t_one = to;
            inner *= ad;
        } else {
            break;
        }
    }
    // strides of the target over outer dims
    std::vector<std::int64_t> t_stride(static_cast<std::size_t>(d + 1), 0);
    std::int64_t st = t_match ? inner : 1;
    for (int k = d; k >= 0; --k) {
        const std::int64_t td = aligned_dim(target, r, k);
        t_stride[static_cast<std::size_t>(k)] = td == 1 ? 0 : st;
        st *= td;
    }
    const auto& kt = kernels::active();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(d + 1), 0);
    const double* pa = a.data();
    double* po = out.data();
    std::int64_t offa = 0, offt = 0;
    for (;;) {
        if (t_match)
            kt.axpy(1.0, pa + offa, po + offt, static_cast<std::size_t>(inner));
        else
            po[offt] += kt.sum(pa + offa, static_cast<std::size_t>(inner));
        offa += inner;
        int k = d;
        for (; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)]++;
            offt += t_stride[static_cast<std::size_t>(k)];
            if (idx[static_cast<std::size_t>(k)] < a.shape()[static_cast<std::size_t>(k)]) break;
            offt -= t_stride[static_cast<std::size_t>(k)] * a.shape()[static_cast<std::size_t>(k)];
            idx[static_cast<std::size_t>(k)] = 0;
        }
        if (k < 0) break;
    }
    return out;
}

Tensor permute3(const Tensor& a, int p0, int p1, int p2) {
    if (a.rank() != 3) throw ShapeError("permute3 expects rank-3, got " + shape_str(a.shape()));
    const std::int64_t d0 = a.dim(0), d1 = a.dim(1), d2 = a.dim(2);
    const std::int64_t dims[3] = {d0, d1, d2};
    Shape os = {dims[p0], dims[p1], dims[p2]};
    Tensor out(os);
    std::int64_t src_stride[3] = {d1 * d2, d2, 1};
    const std::int64_t s0 = src_stride[p0], s1 = src_stride[p1], s2 = src_stride[p2];
    const double* pa = a.data();
    double* po = out.data();
    std::int64_t w = 0;
    for (std::int64_t i = 0; i < os[0]; ++i)
        for (std::int64_t j = 0; j < os[1]; ++j) {
            const std::int64_t base = i * s0 + j * s1;
            if (s2 == 1) {
                std::memcpy(po + w, pa + base, static_cast<std::size_t>(os[2]) * sizeof(double));
                w += os[2];
            } else {
                for (std::int64_t k = 0; k < os[2]; ++k) po[w++] = pa[base + k * s2];
            }
        }
    return out;
}

double sum(const Tensor& a) { return kernels::active().sum(a.data(), static_cast<std::size_t>(a.numel())); }
double mean(const Tensor& a) { return sum(a) / static_cast<double>(a.numel()); }

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::int64_t m = ta ? a.dim(1) : a.dim(0);
    const std::int64_t k = ta ? a.dim(0) : a.dim(1);
    const std::int64_t kb = tb ? b.dim(1) : b.dim(0);
    const std::int64_t n = tb ? b.dim(0) : b.dim(1);
    if (k != kb)
        throw ShapeError("matmul inner dims differ: " + shape_str(a.shape()) + (ta ? "^T" : "") + " x " +
                         shape_str(b.shape()) + (tb ? "^T" : ""));
    Tensor out({m, n});
    kernels::active().matmul(a.data(), b.data(), out.data(), static_cast<std::size_t>(m),
                             static_cast<std::size_t>(k), static_cast<std::size_t>(n), ta, tb);
    return out;
}

// --- im2col / col2im ------------------------------------------------------------

Tensor im2col(const Tensor& x, const Conv2dSpec& sp) {
    if (x.rank() != 4) throw ShapeError("im2col expects NCHW, got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t OH = sp.out_h(H), OW = sp.out_w(W);
    if (OH < 1 || OW < 1) throw ShapeError("im2col: kernel larger than padded input");
    Tensor cols({C * sp.kh * sp.kw, N * OH * OW});
    const std::int64_t ncols = N * OH * OW;
    const double* px = x.data();
    double* pc = cols.data();
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t ki = 0; ki < sp.kh; ++ki)
            for (std::int64_t kj = 0; kj < sp.kw; ++kj) {
                double* row = pc + ((c * sp.kh + ki) * sp.kw + kj) * ncols;
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t oh = 0; oh < OH; ++oh) {
                        const std::int64_t ih = oh * sp.stride - sp.pad + ki;
                        double* dst = row + (n * OH + oh) * OW;
                        if (ih < 0 || ih >= H) {
                            std::memset(dst, 0, static_cast<std::size_t>(OW) * sizeof(double));
                            continue;
                        }
                        const double* src = px + ((n * C + c) * H + ih) * W;
                        if (sp.stride == 1) {
                            // iw = ow - pad + kj, contiguous run clipped to [0, W)
                            const std::int64_t shift = kj - sp.pad;
                            const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                            const std::int64_t hi = std::min<std::int64_t>(OW, W - shift);
                            if (lo > 0) std::memset(dst, 0, static_cast<std::size_t>(lo) * sizeof(double));
                            if (hi > lo)
                                std::memcpy(dst + lo, src + lo + shift,
                                            static_cast<std::size_t>(hi - lo) * sizeof(double));
                            if (hi < OW)
                                std::memset(dst + std::max<std::int64_t>(hi, lo), 0,
                                            static_cast<std::size_t>(OW - std::max<std::int64_t>(hi, lo)) * sizeof(double));
                        } else {
                            for (std::int64_t ow = 0; ow < OW; ++ow) {
                                const std::int64_t iw = ow * sp.stride - sp.pad + kj;
                                dst[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
                            }
                        }
                    }
            }
    return cols;
}

Tensor col2im(const Tensor& cols, const Conv2dSpec& sp, const Shape& x_shape) {
    if (x_shape.size() != 4) throw ShapeError("col2im target must be NCHW");
    const std::int64_t N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3];
    const std::int64_t OH = sp.out_h(H), OW = sp.out_w(W);
    if (cols.rank() != 2 || cols.dim(0) != C * sp.kh * sp.kw || cols.dim(1) != N * OH * OW)
        throw ShapeError("col2im: cols shape " + shape_str(cols.shape()) + " inconsistent with target " + shape_str(x_shape));
    Tensor x(x_shape);
    const std::int64_t ncols = N * OH * OW;
    const double* pc = cols.data();
    double* px = x.data();
    const auto& kt = kernels::active();
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t ki = 0; ki < sp.kh; ++ki)
            for (std::int64_t kj = 0; kj < sp.kw; ++kj) {
                const double* row = pc + ((c * sp.kh + ki) * sp.kw + kj) * ncols;
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t oh = 0; oh < OH; ++oh) {
                        const std::int64_t ih = oh * sp.stride - sp.pad + ki;
                        if (ih < 0 || ih >= H) continue;
                        const double* src = row + (n * OH + oh) * OW;
                        double* dst = px + ((n * C + c) * H + ih) * W;
                        if (sp.stride == 1) {
                            const std::int64_t shift = kj - sp.pad;
                            const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                            const std::int64_t hi = std::min<std::int64_t>(OW, W - shift);
                            if (hi > lo) kt.axpy(1.0, src + lo, dst + lo + shift, static_cast<std::size_t>(hi - lo));
                        } else {
                            for (std::int64_t ow = 0; ow < OW; ++ow) {
                                const std::int64_t iw = ow * sp.stride - sp.pad + kj;
                                if (iw >= 0 && iw < W) dst[iw] += src[ow];
                            }
                        }
                    }
            }
    return x;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dSpec& sp) {
    if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d expects NCHW input and OIHW weight");
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Cout = w.dim(0);
    if (w.dim(1) != C || w.dim(2) != sp.kh || w.dim(3) != sp.kw)
        throw ShapeError("conv2d weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
    const std::int64_t OH = sp.out_h(H), OW = sp.out_w(W);
    const Tensor cols = im2col(x, sp);
    const Tensor w2 = w.reshaped({Cout, C * sp.kh * sp.kw});
    const Tensor y2 = matmul(w2, cols);  // (Cout, N*OH*OW)
    Tensor out({N, Cout, OH, OW});
    const std::int64_t P = OH * OW;
    const double* py = y2.data();
    double* po = out.data();
    for (std::int64_t co = 0; co < Cout; ++co)
        for (std::int64_t n = 0; n < N; ++n)
            std::memcpy(po + ((n * Cout) + co) * P, py + co * (N * P) + n * P,
                        static_cast<std::size_t>(P) * sizeof(double));
    return out;
}

// --- channel ops ----------------------------------------------------------------

Tensor concat_ch(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4) throw ShapeError("concat_ch expects NCHW");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_ch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor out({N, Ca + Cb, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        std::memcpy(out.data() + n * (Ca + Cb) * plane, a.data() + n * Ca * plane,
                    static_cast<std::size_t>(Ca * plane) * sizeof(double));
        std::memcpy(out.data() + (n * (Ca + Cb) + Ca) * plane, b.data() + n * Cb * plane,
                    static_cast<std::size_t>(Cb * plane) * sizeof(double));
    }
    return out;
}

Tensor slice_ch(const Tensor& a, std::int64_t c0, std::int64_t c1) {
    if (a.rank() != 4) throw ShapeError("slice_ch expects NCHW");
    const std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (c0 < 0 || c1 > C || c0 >= c1) throw ShapeError("slice_ch: bad channel range");
    Tensor out({N, c1 - c0, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n)
        std::memcpy(out.data() + n * (c1 - c0) * plane, a.data() + (n * C + c0) * plane,
                    static_cast<std::size_t>((c1 - c0) * plane) * sizeof(double));
    return out;
}

Tensor pad_ch(const Tensor& a, std::int64_t before, std::int64_t after) {
    if (a.rank() != 4) throw ShapeError("pad_ch expects NCHW");
    const std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor out({N, before + C + after, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t n = 0; n < N; ++n)
        std::memcpy(out.data() + (n * (before + C + after) + before) * plane, a.data() + n * C * plane,
                    static_cast<std::size_t>(C * plane) * sizeof(double));
    return out;
}

// --- max pooling -----------------------------------------------------------------

Tensor maxpool2(const Tensor& x, std::vector<std::int64_t>& idx) {
    if (x.rank() != 4) throw ShapeError("maxpool2 expects NCHW");
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("maxpool2 requires even spatial dims");
    Tensor out({N, C, H / 2, W / 2});
    idx.assign(static_cast<std::size_t>(out.numel()), 0);
    const double* px = x.data();
    double* po = out.data();
    std::int64_t w = 0;
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* plane = px + nc * H * W;
        for (std::int64_t i = 0; i < H; i += 2)
            for (std::int64_t j = 0; j < W; j += 2) {
                std::int64_t best = i * W + j;
                double bv = plane[best];
                const std::int64_t cand[3] = {i * W + j + 1, (i + 1) * W + j, (i + 1) * W + j + 1};
                for (std::int64_t c : cand)
                    if (plane[c] > bv) { bv = plane[c]; best = c; }
                po[w] = bv;
                idx[static_cast<std::size_t>(w)] = nc * H * W + best;
                ++w;
            }
    }
    return out;
}

Tensor maxunpool2(const Tensor& g, const std::vector<std::int64_t>& idx, const Shape& x_shape) {
    Tensor out(x_shape);
    if (static_cast<std::size_t>(g.numel()) != idx.size()) throw ShapeError("maxunpool2: index/gradient size mismatch");
    for (std::int64_t i = 0; i < g.numel(); ++i) out[idx[static_cast<std::size_t>(i)]] += g[i];
    return out;
}

Tensor gather_flat(const Tensor& a, const std::vector<std::int64_t>& idx, const Shape& out_shape) {
    Tensor out(out_shape);
    if (static_cast<std::size_t>(out.numel()) != idx.size()) throw ShapeError("gather_flat: index/output size mismatch");
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a[idx[static_cast<std::size_t>(i)]];
    return out;
}

}  // namespace dhvae
