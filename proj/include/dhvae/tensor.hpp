#pragma once

// Dense row-major double tensor. Always contiguous; every operation
// materializes its result. Shapes are small vectors of int64.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace dhvae {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v) { return full({1}, v); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    const Shape& shape() const { return shape_; }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    Tensor reshaped(Shape new_shape) const;  // copy; numel must match

    bool all_finite() const;
    double min() const;
    double max() const;

  private:
    Shape shape_;
    std::vector<double> data_;
};

// --- elementwise with NumPy-style broadcasting ------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor add_scalar(const Tensor& a, double v);
Tensor mul_scalar(const Tensor& a, double v);

// --- shape ops ---------------------------------------------------------------

// Result shape of broadcasting a with b; throws ShapeError when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor broadcast_to(const Tensor& a, const Shape& target);
// Sums over broadcast axes so the result has exactly `target` shape.
Tensor reduce_sum_to(const Tensor& a, const Shape& target);
Tensor permute3(const Tensor& a, int p0, int p1, int p2);

double sum(const Tensor& a);
double mean(const Tensor& a);

// --- linear algebra ----------------------------------------------------------

// 2-D matmul with transpose flags, dispatched to the active kernel lane.
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);

// --- conv support -------------------------------------------------------------

struct Conv2dSpec {
    std::int64_t kh = 3, kw = 3;
    std::int64_t stride = 1;
    std::int64_t pad = 1;
    std::int64_t out_h(std::int64_t h) const { return (h + 2 * pad - kh) / stride + 1; }
    std::int64_t out_w(std::int64_t w) const { return (w + 2 * pad - kw) / stride + 1; }
};

// x: (N,C,H,W) -> (C*kh*kw, N*OH*OW)
Tensor im2col(const Tensor& x, const Conv2dSpec& spec);
// cols: (C*kh*kw, N*OH*OW) scattered back into (N,C,H,W)
Tensor col2im(const Tensor& cols, const Conv2dSpec& spec, const Shape& x_shape);
// x: (N,Cin,H,W), w: (Cout,Cin,kh,kw) -> (N,Cout,OH,OW)
Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dSpec& spec);

// --- channel ops (NCHW) --------------------------------------------------------

Tensor concat_ch(const Tensor& a, const Tensor& b);
Tensor slice_ch(const Tensor& a, std::int64_t c0, std::int64_t c1);
Tensor pad_ch(const Tensor& a, std::int64_t before, std::int64_t after);

// --- max pooling (2x2, stride 2) ------------------------------------------------

// Returns pooled tensor; argmax flat indices into x are written to idx.
Tensor maxpool2(const Tensor& x, std::vector<std::int64_t>& idx);
Tensor maxunpool2(const Tensor& g, const std::vector<std::int64_t>& idx, const Shape& x_shape);
Tensor gather_flat(const Tensor& a, const std::vector<std::int64_t>& idx, const Shape& out_shape);

}  // namespace dhvae
