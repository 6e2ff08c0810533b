#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cstring>

#include "hetsr/autograd.hpp"
#include "hetsr/ops.hpp"
#include "internal.hpp"

namespace hetsr {

namespace {

std::atomic<std::int64_t> mac_counter{0};

struct ConvGeometry {
  std::int64_t n, c, h, w;
  std::int64_t f, kh, kw;
  std::int64_t stride, pad;
  std::int64_t oh, ow;

  std::int64_t patch() const { return c * kh * kw; }
  std::int64_t out_plane() const { return oh * ow; }
  // 1x1, unit stride, no padding: the input plane is already the column matrix.
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

ConvGeometry make_geometry(const Shape& input, const Shape& weight, Conv2dOptions opt,
                           const char* op) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ShapeError(std::string(op) + ": expected input [N,C,H,W] and weight [F,C,Kh,Kw], got " +
                     shape_str(input) + " and " + shape_str(weight));
  }
  if (input[1] != weight[1]) {
    throw ShapeError(std::string(op) + ": input " + shape_str(input) + " has " +
                     std::to_string(input[1]) + " channels but weight " + shape_str(weight) +
                     " expects " + std::to_string(weight[1]));
  }
  if (opt.stride < 1 || opt.padding < 0) {
    throw ShapeError(std::string(op) + ": stride must be >= 1 and padding >= 0");
  }
  ConvGeometry g{input[0],  input[1],   input[2],    input[3], weight[0], weight[2],
                 weight[3], opt.stride, opt.padding, 0,        0};
  g.oh = conv_output_extent(g.h, g.kh, g.stride, g.pad, opt.truncate);
  g.ow = conv_output_extent(g.w, g.kw, g.stride, g.pad, opt.truncate);
  return g;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Output columns [first, last) whose tap kj lands inside a row of width w.
struct ColumnRange {
  std::int64_t first, last;
};

ColumnRange valid_columns(const ConvGeometry& g, std::int64_t kj) {
  const auto offset = kj - g.pad;  // input column of output column 0
  std::int64_t first = offset >= 0 ? 0 : (-offset + g.stride - 1) / g.stride;
  std::int64_t last = g.w - 1 - offset < 0 ? 0 : (g.w - 1 - offset) / g.stride + 1;
  first = std::min(first, g.ow);
  last = std::clamp(last, first, g.ow);
  return {first, last};
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto plane = g.out_plane();
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t ki = 0; ki < g.kh; ++ki)
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        const auto [first, last] = valid_columns(g, kj);
        const auto offset = kj - g.pad;
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const auto ii = oi * g.stride - g.pad + ki;
          T* dst = row + oi * g.ow;
          if (ii < 0 || ii >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + ii) * g.w + offset;
          std::fill(dst, dst + first, T(0));
          if (g.stride == 1) {
            std::copy(src + first, src + last, dst + first);
          } else {
            for (std::int64_t oj = first; oj < last; ++oj) dst[oj] = src[oj * g.stride];
          }
          std::fill(dst + last, dst + g.ow, T(0));
        }
      }
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* x) {
  const auto plane = g.out_plane();
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t ki = 0; ki < g.kh; ++ki)
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        const auto [first, last] = valid_columns(g, kj);
        const auto offset = kj - g.pad;
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const auto ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          const T* src = row + oi * g.ow;
          T* dst = x + (c * g.h + ii) * g.w + offset;
          if (g.stride == 1) {
            for (std::int64_t oj = first; oj < last; ++oj) dst[oj] += src[oj];
          } else {
            for (std::int64_t oj = first; oj < last; ++oj) dst[oj * g.stride] += src[oj];
          }
        }
      }
}

constexpr std::int64_t kMaxDirectFilters = 4;

// Few filters make im2col expand the input far more than the GEMM reuses
// it; these stride-1 kernels accumulate shifted rows instead.
bool use_direct(const ConvGeometry& g) {
  return g.stride == 1 && g.f <= kMaxDirectFilters && g.kh * g.kw > 1;
}

// The direct kernels work on zero-padded planes of width wp = w + 2 pad. On
// that grid output pixel (i, j) sits at i * wp + j and tap (ki, kj) is a
// fixed offset ki * wp + kj, so each tap is one long contiguous update;
// columns j >= ow are scratch and dropped.
struct PaddedPlane {
  std::int64_t wp, hp;  // padded extents
  std::int64_t out_len;  // oh * wp

  explicit PaddedPlane(const ConvGeometry& g)
      : wp(g.w + 2 * g.pad), hp(g.h + 2 * g.pad), out_len(g.oh * (g.w + 2 * g.pad)) {}
};

// Rows of output per tile; keeps the accumulators resident in L1/L2.
constexpr std::int64_t kTileRows = 8;

// acc[f * stride + q] += w[f] * src[q] for every filter f < nf, reading each
// source value once.
template <class T>
void fused_axpy(std::int64_t nf, const T* w, const T* src, T* acc, std::int64_t stride,
                std::int64_t len) {
  T* a0 = acc;
  T* a1 = acc + stride;
  T* a2 = acc + 2 * stride;
  T* a3 = acc + 3 * stride;
  switch (nf) {
    case 1:
#pragma omp simd
      for (std::int64_t q = 0; q < len; ++q) a0[q] += w[0] * src[q];
      break;
    case 2:
#pragma omp simd
      for (std::int64_t q = 0; q < len; ++q) {
        const T v = src[q];
        a0[q] += w[0] * v;
        a1[q] += w[1] * v;
      }
      break;
    case 3:
#pragma omp simd
      for (std::int64_t q = 0; q < len; ++q) {
        const T v = src[q];
        a0[q] += w[0] * v;
        a1[q] += w[1] * v;
        a2[q] += w[2] * v;
      }
      break;
    default:
#pragma omp simd
      for (std::int64_t q = 0; q < len; ++q) {
        const T v = src[q];
        a0[q] += w[0] * v;
        a1[q] += w[1] * v;
        a2[q] += w[2] * v;
        a3[q] += w[3] * v;
      }
      break;
  }
}

template <class T>
void pad_planes(const T* x, std::int64_t planes, const ConvGeometry& g, const PaddedPlane& pp,
                std::int64_t extra_rows, T* dst) {
  const auto size = (pp.hp + extra_rows) * pp.wp;
  std::fill(dst, dst + planes * size, T(0));
  for (std::int64_t c = 0; c < planes; ++c)
    for (std::int64_t i = 0; i < g.h; ++i) {
      std::copy(x + (c * g.h + i) * g.w, x + (c * g.h + i + 1) * g.w,
                dst + c * size + (i + g.pad) * pp.wp + g.pad);
    }
}

template <class T>
void direct_forward(const T* x, const T* w, const ConvGeometry& g, T* out) {
  const PaddedPlane pp(g);
  // One spare row lets the last taps read past the bottom edge.
  const auto psize = (pp.hp + 1) * pp.wp;
  std::vector<T> xp(static_cast<std::size_t>(g.c * psize));
  pad_planes(x, g.c, g, pp, 1, xp.data());
  std::vector<T> acc(static_cast<std::size_t>(g.f * kTileRows * pp.wp));
  for (std::int64_t r0 = 0; r0 < g.oh; r0 += kTileRows) {
    const auto rows = std::min(kTileRows, g.oh - r0);
    const auto len = rows * pp.wp;
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::int64_t c = 0; c < g.c; ++c)
      for (std::int64_t ki = 0; ki < g.kh; ++ki)
        for (std::int64_t kj = 0; kj < g.kw; ++kj) {
          const T* src = xp.data() + c * psize + (r0 + ki) * pp.wp + kj;
          T wv[kMaxDirectFilters] = {};
          for (std::int64_t f = 0; f < g.f; ++f) wv[f] = w[((f * g.c + c) * g.kh + ki) * g.kw + kj];
          fused_axpy(g.f, wv, src, acc.data(), kTileRows * pp.wp, len);
        }
    for (std::int64_t f = 0; f < g.f; ++f)
      for (std::int64_t i = 0; i < rows; ++i) {
        const T* a = acc.data() + f * kTileRows * pp.wp + i * pp.wp;
        std::copy(a, a + g.ow, out + f * g.out_plane() + (r0 + i) * g.ow);
      }
  }
}

// Output gradients laid out on the padded grid with kh spare rows above and
// below, zero outside the valid block.
template <class T>
std::vector<T> spread_gradient(const T* gout, const ConvGeometry& g, const PaddedPlane& pp,
                               std::int64_t& gsize) {
  gsize = (g.oh + 2 * g.kh) * pp.wp;
  std::vector<T> gp(static_cast<std::size_t>(g.f * gsize), T(0));
  for (std::int64_t f = 0; f < g.f; ++f)
    for (std::int64_t i = 0; i < g.oh; ++i) {
      const T* src = gout + f * g.out_plane() + i * g.ow;
      std::copy(src, src + g.ow, gp.data() + f * gsize + (i + g.kh) * pp.wp);
    }
  return gp;
}

template <class T>
void direct_input_grad(const T* gout, const T* w, const ConvGeometry& g, T* gx) {
  const PaddedPlane pp(g);
  std::int64_t gsize = 0;
  const auto gp = spread_gradient(gout, g, pp, gsize);
  std::vector<T> acc(static_cast<std::size_t>(kTileRows * pp.wp));
  // Padded input position Q collects gout[Q - ki * wp - kj] * w[ki, kj];
  // wrapped reads land on the zero columns.
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t r0 = 0; r0 < g.h; r0 += kTileRows) {
      const auto rows = std::min(kTileRows, g.h - r0);
      const auto len = rows * pp.wp;
      const auto q0 = (r0 + g.pad) * pp.wp;
      std::fill(acc.begin(), acc.end(), T(0));
      for (std::int64_t f = 0; f < g.f; ++f)
        for (std::int64_t ki = 0; ki < g.kh; ++ki)
          for (std::int64_t kj = 0; kj < g.kw; ++kj) {
            const T wv = w[((f * g.c + c) * g.kh + ki) * g.kw + kj];
            const T* src = gp.data() + f * gsize + q0 + (g.kh - ki) * pp.wp - kj;
#pragma omp simd
            for (std::int64_t q = 0; q < len; ++q) acc[q] += wv * src[q];
          }
      for (std::int64_t i = 0; i < rows; ++i) {
        const T* a = acc.data() + i * pp.wp + g.pad;
        std::copy(a, a + g.w, gx + (c * g.h + r0 + i) * g.w);
      }
    }
}

template <class T>
void direct_weight_grad(const T* x, const T* gout, const ConvGeometry& g, T* gw) {
  const PaddedPlane pp(g);
  const auto psize = (pp.hp + 1) * pp.wp;
  std::vector<T> xp(static_cast<std::size_t>(g.c * psize));
  pad_planes(x, g.c, g, pp, 1, xp.data());
  std::int64_t gsize = 0;
  const auto gp = spread_gradient(gout, g, pp, gsize);
  // Lane-wise partial sums with a fixed reduction order; each input row is
  // read once for all filters.
  constexpr std::int64_t kLanes = 16;
  const auto full = pp.out_len / kLanes * kLanes;
  for (std::int64_t c = 0; c < g.c; ++c)
    for (std::int64_t ki = 0; ki < g.kh; ++ki)
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* xs = xp.data() + c * psize + ki * pp.wp + kj;
        T lanes[kMaxDirectFilters][kLanes] = {};
        for (std::int64_t q = 0; q < full; q += kLanes)
          for (std::int64_t f = 0; f < g.f; ++f) {
            const T* gf = gp.data() + f * gsize + g.kh * pp.wp + q;
#pragma omp simd
            for (std::int64_t l = 0; l < kLanes; ++l) lanes[f][l] += gf[l] * xs[q + l];
          }
        for (std::int64_t f = 0; f < g.f; ++f) {
          const T* gf = gp.data() + f * gsize + g.kh * pp.wp;
          T total = 0;
          for (std::int64_t q = full; q < pp.out_len; ++q) total += gf[q] * xs[q];
          for (std::int64_t l = 0; l < kLanes; ++l) total += lanes[f][l];
          gw[((f * g.c + c) * g.kh + ki) * g.kw + kj] = total;
        }
      }
}

template <class T>
void conv_forward(const T* x, const T* w, const ConvGeometry& g, T* out) {
  const auto patch = g.patch(), plane = g.out_plane();
  Eigen::Map<const RowMat<T>> W(w, g.f, patch);
  if (use_direct(g)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      direct_forward(x + n * g.c * g.h * g.w, w, g, out + n * g.f * plane);
    }
    return;
  }
#pragma omp parallel
  {
    std::vector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(patch * plane));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      const T* xn = x + n * g.c * g.h * g.w;
      if (!g.pointwise()) im2col(xn, g, cols.data());
      Eigen::Map<const RowMat<T>> C(g.pointwise() ? xn : cols.data(), patch, plane);
      Eigen::Map<RowMat<T>> O(out + n * g.f * plane, g.f, plane);
      O.noalias() = W * C;
    }
  }
}

template <class T>
void conv_input_grad(const T* gout, const T* w, const ConvGeometry& g, T* gx) {
  const auto patch = g.patch(), plane = g.out_plane();
  Eigen::Map<const RowMat<T>> W(w, g.f, patch);
  if (use_direct(g)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      direct_input_grad(gout + n * g.f * plane, w, g, gx + n * g.c * g.h * g.w);
    }
    return;
  }
#pragma omp parallel
  {
    std::vector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(patch * plane));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      Eigen::Map<const RowMat<T>> G(gout + n * g.f * plane, g.f, plane);
      T* gxn = gx + n * g.c * g.h * g.w;
      if (g.pointwise()) {
        Eigen::Map<RowMat<T>> GX(gxn, patch, plane);
        GX.noalias() = W.transpose() * G;
      } else {
        Eigen::Map<RowMat<T>> C(cols.data(), patch, plane);
        C.noalias() = W.transpose() * G;
        std::fill(gxn, gxn + g.c * g.h * g.w, T(0));
        col2im(cols.data(), g, gxn);
      }
    }
  }
}

// Per-sample partial products are summed in sample order, so the result does
// not depend on the thread count.
template <class T>
void conv_weight_grad(const T* x, const T* gout, const ConvGeometry& g, T* gw) {
  const auto patch = g.patch(), plane = g.out_plane();
  const auto wsize = g.f * patch;
  std::vector<T> partial(static_cast<std::size_t>(g.n * wsize));
  if (use_direct(g)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      direct_weight_grad(x + n * g.c * g.h * g.w, gout + n * g.f * plane, g,
                         partial.data() + n * wsize);
    }
  } else
#pragma omp parallel
  {
    std::vector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(patch * plane));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.n; ++n) {
      const T* xn = x + n * g.c * g.h * g.w;
      if (!g.pointwise()) im2col(xn, g, cols.data());
      Eigen::Map<const RowMat<T>> C(g.pointwise() ? xn : cols.data(), patch, plane);
      Eigen::Map<const RowMat<T>> G(gout + n * g.f * plane, g.f, plane);
      Eigen::Map<RowMat<T>> P(partial.data() + n * wsize, g.f, patch);
      P.noalias() = G * C.transpose();
    }
  }
  std::fill(gw, gw + wsize, T(0));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* p = partial.data() + n * wsize;
    for (std::int64_t i = 0; i < wsize; ++i) gw[i] += p[i];
  }
}

}  // namespace

namespace detail {
void count_macs(std::int64_t n) { mac_counter.fetch_add(n, std::memory_order_relaxed); }
}  // namespace detail

std::int64_t mac_count() { return mac_counter.load(); }
void reset_mac_count() { mac_counter.store(0); }

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t padding, bool truncate) {
  const auto span = in + 2 * padding - kernel;
  if (span < 0 || (!truncate && span % stride != 0)) {
    throw ShapeError("conv2d: extent " + std::to_string(in) + " with kernel " +
                     std::to_string(kernel) + ", stride " + std::to_string(stride) +
                     ", padding " + std::to_string(padding) +
                     " does not give an integer output extent");
  }
  return span / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options) {
  detail::require_same_dtype(input, weight, "conv2d");
  const auto g = make_geometry(input.shape(), weight.shape(), options, "conv2d");
  Tensor out = Tensor::empty({g.n, g.f, g.oh, g.ow}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    conv_forward(input.data<T>().data(), weight.data<T>().data(), g, out.data<T>().data());
  });
  detail::count_macs(g.n * g.f * g.patch() * g.out_plane());
  out = record(std::move(out), "conv2d", {input, weight}, [options](const BackwardArgs& args) {
    const auto& gout = args.grad;
    const auto& x = args.in(0);
    const auto& w = args.in(1);
    Tensor gx, gw;
    if (args.need(0)) gx = conv2d_input_grad(gout, w, x.shape(), options);
    if (args.need(1)) gw = conv2d_weight_grad(x, gout, w.shape(), options);
    return std::vector<Tensor>{gx, gw};
  });
  return bias.defined() ? add_channel_bias(out, bias) : out;
}

Tensor conv2d_input_grad(const Tensor& grad_output, const Tensor& weight, const Shape& input_shape,
                         Conv2dOptions options) {
  detail::require_same_dtype(grad_output, weight, "conv2d_input_grad");
  const auto g = make_geometry(input_shape, weight.shape(), options, "conv2d_input_grad");
  if (grad_output.shape() != Shape{g.n, g.f, g.oh, g.ow}) {
    throw ShapeError("conv2d_input_grad: gradient shape " + shape_str(grad_output.shape()) +
                     " does not match the output geometry");
  }
  Tensor gx = Tensor::empty(input_shape, weight.dtype());
  dispatch(weight.dtype(), [&]<typename T>() {
    conv_input_grad(grad_output.data<T>().data(), weight.data<T>().data(), g, gx.data<T>().data());
  });
  return record(std::move(gx), "conv2d_input_grad", {grad_output, weight},
                [options](const BackwardArgs& args) {
                  const auto& u = args.grad;
                  const auto& gout = args.in(0);
                  const auto& w = args.in(1);
                  Tensor ggout, gw;
                  if (args.need(0)) ggout = conv2d(u, w, {}, options);
                  if (args.need(1)) gw = conv2d_weight_grad(u, gout, w.shape(), options);
                  return std::vector<Tensor>{ggout, gw};
                });
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_output,
                          const Shape& weight_shape, Conv2dOptions options) {
  detail::require_same_dtype(input, grad_output, "conv2d_weight_grad");
  const auto g = make_geometry(input.shape(), weight_shape, options, "conv2d_weight_grad");
  if (grad_output.shape() != Shape{g.n, g.f, g.oh, g.ow}) {
    throw ShapeError("conv2d_weight_grad: gradient shape " + shape_str(grad_output.shape()) +
                     " does not match the output geometry");
  }
  Tensor gw = Tensor::empty(weight_shape, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    conv_weight_grad(input.data<T>().data(), grad_output.data<T>().data(), g,
                     gw.data<T>().data());
  });
  return record(std::move(gw), "conv2d_weight_grad", {input, grad_output},
                [options](const BackwardArgs& args) {
                  const auto& v = args.grad;
                  const auto& x = args.in(0);
                  const auto& gout = args.in(1);
                  Tensor gx, ggout;
                  if (args.need(0)) gx = conv2d_input_grad(gout, v, x.shape(), options);
                  if (args.need(1)) ggout = conv2d(x, v, {}, options);
                  return std::vector<Tensor>{gx, ggout};
                });
}

}  // namespace hetsr
