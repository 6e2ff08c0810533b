#include "hetsr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "hetsr/autograd.hpp"
#include "internal.hpp"

namespace hetsr {

using detail::require_rank;
using detail::require_same_dtype;

namespace {

// True when `small` broadcasts into `big` under the trailing-singleton rule.
bool trailing_compatible(const Shape& small, const Shape& big) {
  if (numel(small) == 1 && small.size() <= big.size()) return true;
  if (small.size() != big.size()) return false;
  std::size_t k = 0;
  while (k < small.size() && small[k] == big[k]) ++k;
  for (; k < small.size(); ++k) {
    if (small[k] != 1) return false;
  }
  return true;
}

struct BroadcastPlan {
  Shape out;
  std::int64_t inner_a = 1;
  std::int64_t inner_b = 1;
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_same_dtype(a, b, op);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return {sa, 1, 1};
  if (trailing_compatible(sb, sa)) return {sa, 1, numel(sa) / std::max<std::int64_t>(numel(sb), 1)};
  if (trailing_compatible(sa, sb)) return {sb, numel(sb) / std::max<std::int64_t>(numel(sa), 1), 1};
  throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                   " are not broadcast-compatible");
}

template <class Op>
Tensor binary_kernel(const Tensor& a, const Tensor& b, const BroadcastPlan& p, Op op) {
  Tensor out = Tensor::empty(p.out, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto A = a.data<T>();
    auto B = b.data<T>();
    auto O = out.data<T>();
    const auto n = static_cast<std::int64_t>(O.size());
    if (p.inner_a == 1 && p.inner_b == 1) {
      for (std::int64_t i = 0; i < n; ++i) O[i] = op(A[i], B[i]);
    } else if (p.inner_a == 1) {
      const auto inner = p.inner_b;
      for (std::int64_t j = 0; j < n / inner; ++j) {
        const T bj = B[j];
        for (std::int64_t k = j * inner; k < (j + 1) * inner; ++k) O[k] = op(A[k], bj);
      }
    } else {
      const auto inner = p.inner_a;
      for (std::int64_t j = 0; j < n / inner; ++j) {
        const T aj = A[j];
        for (std::int64_t k = j * inner; k < (j + 1) * inner; ++k) O[k] = op(aj, B[k]);
      }
    }
  });
  return out;
}

template <class Op>
Tensor unary_kernel(const Tensor& x, Op op) {
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::size_t i = 0; i < O.size(); ++i) O[i] = op(X[i]);
  });
  return out;
}

Tensor reduce_to(const Tensor& g, const Shape& shape) {
  return g.shape() == shape ? g : sum_to(g, shape);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto p = plan_broadcast(a, b, "add");
  Tensor out = binary_kernel(a, b, p, [](auto x, auto y) { return x + y; });
  return record(std::move(out), "add", {a, b}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    return std::vector<Tensor>{args.need(0) ? reduce_to(g, args.in(0).shape()) : Tensor{},
                               args.need(1) ? reduce_to(g, args.in(1).shape()) : Tensor{}};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto p = plan_broadcast(a, b, "sub");
  Tensor out = binary_kernel(a, b, p, [](auto x, auto y) { return x - y; });
  return record(std::move(out), "sub", {a, b}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    return std::vector<Tensor>{args.need(0) ? reduce_to(g, args.in(0).shape()) : Tensor{},
                               args.need(1) ? reduce_to(neg(g), args.in(1).shape()) : Tensor{}};
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto p = plan_broadcast(a, b, "mul");
  Tensor out = binary_kernel(a, b, p, [](auto x, auto y) { return x * y; });
  return record(std::move(out), "mul", {a, b}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    const auto& a = args.in(0);
    const auto& b = args.in(1);
    return std::vector<Tensor>{args.need(0) ? reduce_to(mul(g, b), a.shape()) : Tensor{},
                               args.need(1) ? reduce_to(mul(g, a), b.shape()) : Tensor{}};
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const auto p = plan_broadcast(a, b, "div");
  Tensor out = binary_kernel(a, b, p, [](auto x, auto y) { return x / y; });
  return record(std::move(out), "div", {a, b}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    const auto& a = args.in(0);
    const auto& b = args.in(1);
    Tensor ga, gb;
    if (args.need(0)) ga = reduce_to(div(g, b), a.shape());
    if (args.need(1)) gb = reduce_to(neg(div(mul(g, a), mul(b, b))), b.shape());
    return std::vector<Tensor>{ga, gb};
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  Tensor out = dispatch(x.dtype(), [&]<typename T>() {
    const T c = static_cast<T>(s);
    return unary_kernel(x, [c](T v) { return v + c; });
  });
  return record(std::move(out), "add_scalar", {x},
                [](const BackwardArgs& args) { return std::vector<Tensor>{args.grad}; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  Tensor out = dispatch(x.dtype(), [&]<typename T>() {
    const T c = static_cast<T>(s);
    return unary_kernel(x, [c](T v) { return v * c; });
  });
  return record(std::move(out), "mul_scalar", {x}, [s](const BackwardArgs& args) {
    return std::vector<Tensor>{mul_scalar(args.grad, s)};
  });
}

Tensor neg(const Tensor& x) {
  Tensor out = unary_kernel(x, [](auto v) { return -v; });
  return record(std::move(out), "neg", {x},
                [](const BackwardArgs& args) { return std::vector<Tensor>{neg(args.grad)}; });
}

Tensor square(const Tensor& x) {
  Tensor out = unary_kernel(x, [](auto v) { return v * v; });
  return record(std::move(out), "square", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{mul_scalar(mul(args.grad, args.in(0)), 2.0)};
  });
}

Tensor sqrt(const Tensor& x) {
  Tensor out = unary_kernel(x, [](auto v) { return std::sqrt(v); });
  return record(std::move(out), "sqrt", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{div(args.grad, mul_scalar(sqrt(args.in(0)), 2.0))};
  });
}

Tensor sum(const Tensor& x) {
  Tensor out = dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    // Accumulate in double so f32 reductions stay accurate.
    double acc = 0.0;
    for (T v : X) acc += static_cast<double>(v);
    return Tensor::scalar(acc, x.dtype());
  });
  return record(std::move(out), "sum", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{expand_to(args.grad, args.in(0).shape())};
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) {
    throw ShapeError("mean of an empty tensor");
  }
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (!trailing_compatible(shape, x.shape())) {
    throw ShapeError("sum_to: cannot reduce " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor out = Tensor::empty(shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    const auto blocks = static_cast<std::int64_t>(O.size());
    const auto inner = blocks ? x.numel() / blocks : 0;
    for (std::int64_t j = 0; j < blocks; ++j) {
      double acc = 0.0;
      for (std::int64_t k = j * inner; k < (j + 1) * inner; ++k) acc += static_cast<double>(X[k]);
      O[j] = static_cast<T>(acc);
    }
  });
  return record(std::move(out), "sum_to", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{expand_to(args.grad, args.in(0).shape())};
  });
}

Tensor expand_to(const Tensor& x, const Shape& shape) {
  if (!trailing_compatible(x.shape(), shape)) {
    throw ShapeError("expand_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                     shape_str(shape));
  }
  Tensor out = Tensor::empty(shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    const auto blocks = static_cast<std::int64_t>(X.size());
    const auto inner = blocks ? numel(shape) / blocks : 0;
    for (std::int64_t j = 0; j < blocks; ++j) {
      std::fill(O.begin() + j * inner, O.begin() + (j + 1) * inner, X[j]);
    }
  });
  return record(std::move(out), "expand_to", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{sum_to(args.grad, args.in(0).shape())};
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = x.detach();
  out.impl()->shape = shape;
  return record(std::move(out), "reshape", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{reshape(args.grad, args.in(0).shape())};
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  require_same_dtype(a, b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ for " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::empty({m, n}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> A(a.data<T>().data(), m, k);
    Eigen::Map<const Mat> B(b.data<T>().data(), k, n);
    Eigen::Map<Mat> C(out.data<T>().data(), m, n);
    C.noalias() = A * B;
  });
  detail::count_macs(m * k * n);
  return record(std::move(out), "matmul", {a, b}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    Tensor ga, gb;
    if (args.need(0)) ga = matmul(g, transpose(args.in(1)));
    if (args.need(1)) gb = matmul(transpose(args.in(0)), g);
    return std::vector<Tensor>{ga, gb};
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const auto r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::empty({c, r}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) O[j * r + i] = X[i * c + j];
  });
  return record(std::move(out), "transpose", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{transpose(args.grad)};
  });
}

namespace {

void require_channel_layout(const Tensor& x, std::int64_t channels, const char* op) {
  if (x.ndim() < 2 || x.dim(1) != channels) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(x.shape()) + " does not have " +
                     std::to_string(channels) + " channels on axis 1");
  }
}

std::int64_t trailing_numel(const Shape& shape, std::size_t from) {
  std::int64_t n = 1;
  for (std::size_t i = from; i < shape.size(); ++i) n *= shape[i];
  return n;
}

}  // namespace

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_channel_bias");
  require_same_dtype(x, bias, "add_channel_bias");
  require_channel_layout(x, bias.dim(0), "add_channel_bias");
  const auto n = x.dim(0), c = x.dim(1), inner = trailing_numel(x.shape(), 2);
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto B = bias.data<T>();
    auto O = out.data<T>();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto base = (i * c + ch) * inner;
        for (std::int64_t k = 0; k < inner; ++k) O[base + k] = X[base + k] + B[ch];
      }
  });
  return record(std::move(out), "add_channel_bias", {x, bias}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{args.grad, args.need(1) ? channel_sum(args.grad) : Tensor{}};
  });
}

Tensor channel_sum(const Tensor& x) {
  if (x.ndim() < 2) {
    throw ShapeError("channel_sum: expected rank >= 2, got " + shape_str(x.shape()));
  }
  const auto n = x.dim(0), c = x.dim(1), inner = trailing_numel(x.shape(), 2);
  Tensor out = Tensor::empty({c}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto base = (i * c + ch) * inner;
        for (std::int64_t k = 0; k < inner; ++k) acc += static_cast<double>(X[base + k]);
      }
      O[ch] = static_cast<T>(acc);
    }
  });
  return record(std::move(out), "channel_sum", {x}, [](const BackwardArgs& args) {
    return std::vector<Tensor>{broadcast_channels(args.grad, args.in(0).shape())};
  });
}

Tensor broadcast_channels(const Tensor& bias, const Shape& shape) {
  require_rank(bias, 1, "broadcast_channels");
  return add_channel_bias(Tensor::zeros(shape, bias.dtype()), bias);
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

namespace {

// Local slope of the piecewise-linear activation; the positive branch owns 0.
Tensor slope_mask(const Tensor& x, double negative_slope) {
  return dispatch(x.dtype(), [&]<typename T>() {
    const T s = static_cast<T>(negative_slope);
    return unary_kernel(x, [s](T v) { return v >= T(0) ? T(1) : s; });
  });
}

}  // namespace

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = dispatch(x.dtype(), [&]<typename T>() {
    const T s = static_cast<T>(slope);
    return unary_kernel(x, [s](T v) { return v > T(0) ? v : s * v; });
  });
  return record(std::move(out), "leaky_relu", {x}, [slope](const BackwardArgs& args) {
    return std::vector<Tensor>{mul(args.grad, slope_mask(args.in(0), slope))};
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) {
    throw ShapeError("prelu: slope must hold one element, got " + shape_str(slope.shape()));
  }
  require_same_dtype(x, slope, "prelu");
  const double a = slope.item();
  Tensor out = dispatch(x.dtype(), [&]<typename T>() {
    const T s = static_cast<T>(a);
    return unary_kernel(x, [s](T v) { return v > T(0) ? v : s * v; });
  });
  return record(std::move(out), "prelu", {x, slope}, [](const BackwardArgs& args) {
    const auto& g = args.grad;
    const auto& x = args.in(0);
    const auto& a = args.in(1);
    const Tensor positive = slope_mask(x, 0.0);
    const Tensor negative = add_scalar(neg(positive), 1.0);
    const Tensor g_negative = mul(g, negative);
    Tensor gx, ga;
    if (args.need(0)) gx = add(mul(g, positive), mul(g_negative, a));
    if (args.need(1)) ga = sum_to(mul(g_negative, x), a.shape());
    return std::vector<Tensor>{gx, ga};
  });
}

Tensor pixel_shuffle(const Tensor& x, std::int64_t r) {
  require_rank(x, 4, "pixel_shuffle");
  if (r < 1 || x.dim(1) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channel extent " + std::to_string(x.dim(1)) +
                     " is not divisible by factor^2 = " + std::to_string(r * r));
  }
  const auto n = x.dim(0), c = x.dim(1) / (r * r), h = x.dim(2), w = x.dim(3);
  Tensor out = Tensor::empty({n, c, h * r, w * r}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    std::int64_t src = 0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < r; ++j)
            for (std::int64_t y = 0; y < h; ++y)
              for (std::int64_t z = 0; z < w; ++z, ++src)
                O[((b * c + ch) * h * r + y * r + i) * w * r + z * r + j] = X[src];
  });
  return record(std::move(out), "pixel_shuffle", {x}, [r](const BackwardArgs& args) {
    return std::vector<Tensor>{pixel_unshuffle(args.grad, r)};
  });
}

Tensor pixel_unshuffle(const Tensor& x, std::int64_t r) {
  require_rank(x, 4, "pixel_unshuffle");
  if (r < 1 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial extents of " + shape_str(x.shape()) +
                     " are not divisible by " + std::to_string(r));
  }
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
  Tensor out = Tensor::empty({n, c * r * r, h, w}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    std::int64_t dst = 0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < r; ++j)
            for (std::int64_t y = 0; y < h; ++y)
              for (std::int64_t z = 0; z < w; ++z, ++dst)
                O[dst] = X[((b * c + ch) * h * r + y * r + i) * w * r + z * r + j];
  });
  return record(std::move(out), "pixel_unshuffle", {x}, [r](const BackwardArgs& args) {
    return std::vector<Tensor>{pixel_shuffle(args.grad, r)};
  });
}

namespace {

struct AxisView {
  std::int64_t outer, extent, inner;
};

AxisView axis_view(const Shape& shape, int axis, const char* op) {
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(shape));
  }
  AxisView v{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) v.inner *= shape[static_cast<std::size_t>(i)];
  return v;
}

int normalize_axis(int axis, int rank) { return axis < 0 ? axis + rank : axis; }

}  // namespace

Tensor index_select(const Tensor& x, int axis, const std::vector<std::int64_t>& index) {
  const auto v = axis_view(x.shape(), axis, "index_select");
  axis = normalize_axis(axis, x.ndim());
  for (auto i : index) {
    if (i < 0 || i >= v.extent) {
      throw ShapeError("index_select: index " + std::to_string(i) + " out of range for extent " +
                       std::to_string(v.extent));
    }
  }
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(index.size());
  Tensor out = Tensor::empty(shape, x.dtype());
  const auto k = static_cast<std::int64_t>(index.size());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t o = 0; o < v.outer; ++o)
      for (std::int64_t j = 0; j < k; ++j) {
        const auto* src = X.data() + (o * v.extent + index[j]) * v.inner;
        std::copy(src, src + v.inner, O.data() + (o * k + j) * v.inner);
      }
  });
  return record(std::move(out), "index_select", {x},
                [axis, index, extent = v.extent](const BackwardArgs& args) {
                  return std::vector<Tensor>{index_add(args.grad, axis, index, extent)};
                });
}

Tensor index_add(const Tensor& x, int axis, const std::vector<std::int64_t>& index,
                 std::int64_t size) {
  const auto v = axis_view(x.shape(), axis, "index_add");
  axis = normalize_axis(axis, x.ndim());
  if (v.extent != static_cast<std::int64_t>(index.size())) {
    throw ShapeError("index_add: " + std::to_string(index.size()) + " indices for extent " +
                     std::to_string(v.extent));
  }
  for (auto i : index) {
    if (i < 0 || i >= size) {
      throw ShapeError("index_add: index " + std::to_string(i) + " out of range for size " +
                       std::to_string(size));
    }
  }
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(axis)] = size;
  Tensor out = Tensor::zeros(shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t o = 0; o < v.outer; ++o)
      for (std::int64_t j = 0; j < v.extent; ++j) {
        const auto* src = X.data() + (o * v.extent + j) * v.inner;
        auto* dst = O.data() + (o * size + index[j]) * v.inner;
        for (std::int64_t t = 0; t < v.inner; ++t) dst[t] += src[t];
      }
  });
  return record(std::move(out), "index_add", {x}, [axis, index](const BackwardArgs& args) {
    return std::vector<Tensor>{index_select(args.grad, axis, index)};
  });
}

Tensor pad_replicate(const Tensor& x, std::int64_t pad) {
  if (x.ndim() < 2 || pad < 0) {
    throw ShapeError("pad_replicate: needs rank >= 2 and pad >= 0, got " + shape_str(x.shape()));
  }
  const auto h = x.dim(-2), w = x.dim(-1);
  const auto planes = x.numel() / std::max<std::int64_t>(h * w, 1);
  const auto ph = h + 2 * pad, pw = w + 2 * pad;
  Shape shape = x.shape();
  shape[shape.size() - 2] = ph;
  shape[shape.size() - 1] = pw;
  Tensor out = Tensor::empty(shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < ph; ++i) {
        const auto si = std::clamp<std::int64_t>(i - pad, 0, h - 1);
        for (std::int64_t j = 0; j < pw; ++j) {
          const auto sj = std::clamp<std::int64_t>(j - pad, 0, w - 1);
          O[(p * ph + i) * pw + j] = X[(p * h + si) * w + sj];
        }
      }
  });
  return record(std::move(out), "pad_replicate", {x}, [pad](const BackwardArgs& args) {
    return std::vector<Tensor>{pad_replicate_adjoint(args.grad, pad)};
  });
}

Tensor pad_replicate_adjoint(const Tensor& x, std::int64_t pad) {
  if (x.ndim() < 2 || pad < 0 || x.dim(-2) <= 2 * pad || x.dim(-1) <= 2 * pad) {
    throw ShapeError("pad_replicate_adjoint: shape " + shape_str(x.shape()) +
                     " cannot be unpadded by " + std::to_string(pad));
  }
  const auto ph = x.dim(-2), pw = x.dim(-1);
  const auto h = ph - 2 * pad, w = pw - 2 * pad;
  const auto planes = x.numel() / (ph * pw);
  Shape shape = x.shape();
  shape[shape.size() - 2] = h;
  shape[shape.size() - 1] = w;
  Tensor out = Tensor::zeros(shape, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto X = x.data<T>();
    auto O = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < ph; ++i) {
        const auto si = std::clamp<std::int64_t>(i - pad, 0, h - 1);
        for (std::int64_t j = 0; j < pw; ++j) {
          const auto sj = std::clamp<std::int64_t>(j - pad, 0, w - 1);
          O[(p * h + si) * w + sj] += X[(p * ph + i) * pw + j];
        }
      }
  });
  return record(std::move(out), "pad_replicate_adjoint", {x}, [pad](const BackwardArgs& args) {
    return std::vector<Tensor>{pad_replicate(args.grad, pad)};
  });
}

}  // namespace hetsr
