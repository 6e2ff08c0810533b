#pragma once

#include <cstdint>
#include <vector>

#include "hetsr/tensor.hpp"

// Differentiable tensor operations. Every op records a graph node when grad
// mode is on and an input requires grad. Binary ops broadcast only over
// trailing singleton dimensions: the smaller operand has the same rank and a
// shape equal to the larger one up to some axis, followed by ones (or it has
// a single element).
namespace hetsr {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& x, double s) { return add_scalar(x, s); }
inline Tensor operator-(const Tensor& x, double s) { return add_scalar(x, -s); }
inline Tensor operator*(const Tensor& x, double s) { return mul_scalar(x, s); }
inline Tensor operator*(double s, const Tensor& x) { return mul_scalar(x, s); }

// Reductions to a 0-d tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Reduce/broadcast between a shape and a trailing-singleton-compatible shape.
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor expand_to(const Tensor& x, const Shape& shape);

Tensor reshape(const Tensor& x, const Shape& shape);

// 2-D matrix product [m,k] x [k,n] and transpose.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  // Floor the output extent and ignore trailing input the window cannot
  // reach, instead of rejecting shapes the stride does not tile.
  bool truncate = false;
};

// Cross-correlation of input [N,C,H,W] with weight [F,C,Kh,Kw]; bias [F] is
// optional (pass an undefined tensor to skip it).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias = {},
              Conv2dOptions options = {});
// Adjoints of conv2d with respect to its input and weight. They are exposed
// because each is the other's derivative, which closes conv2d under
// repeated differentiation.
Tensor conv2d_input_grad(const Tensor& grad_output, const Tensor& weight, const Shape& input_shape,
                         Conv2dOptions options);
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_output,
                          const Shape& weight_shape, Conv2dOptions options);
// Output extents of conv2d; throws when the window does not tile the input
// unless `truncate` is set.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding, bool truncate = false);

// x [N,C,...] + bias [C] broadcast over every other axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// Sum over every axis except axis 1: [N,C,...] -> [C].
Tensor channel_sum(const Tensor& x);
// Inverse shape map of channel_sum: [C] -> `shape`.
Tensor broadcast_channels(const Tensor& bias, const Shape& shape);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
// Learnable slope: `slope` holds a single element.
Tensor prelu(const Tensor& x, const Tensor& slope);

// [N, C*r*r, H, W] <-> [N, C, r*H, r*W].
Tensor pixel_shuffle(const Tensor& x, std::int64_t factor);
Tensor pixel_unshuffle(const Tensor& x, std::int64_t factor);

// Select slices along `axis`; index_add scatters them back (summing repeats)
// into an axis of extent `size`.
Tensor index_select(const Tensor& x, int axis, const std::vector<std::int64_t>& index);
Tensor index_add(const Tensor& x, int axis, const std::vector<std::int64_t>& index,
                 std::int64_t size);

// Replicate-pad the last two axes by `pad` on every side, and its adjoint
// (folds the border back onto the edge pixels).
Tensor pad_replicate(const Tensor& x, std::int64_t pad);
Tensor pad_replicate_adjoint(const Tensor& x, std::int64_t pad);

// Multiply-accumulates issued by conv2d and matmul forward kernels since the
// last reset, summed over all threads.
std::int64_t mac_count();
void reset_mac_count();

}  // namespace hetsr
