#include "hetsr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace hetsr::data {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<std::int64_t> index;
  std::vector<double> weight;
};

// One tap list per output sample. `scale` < 1 shrinks, > 1 enlarges.
std::vector<Taps> make_taps(std::int64_t in, std::int64_t out, double scale) {
  const double stretch = std::max(1.0, 1.0 / scale);
  const double support = 2.0 * stretch;
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    const double centre = (static_cast<double>(o) + 0.5) / scale - 0.5;
    auto& t = taps[static_cast<std::size_t>(o)];
    double total = 0.0;
    const auto first = static_cast<std::int64_t>(std::ceil(centre - support));
    const auto last = static_cast<std::int64_t>(std::floor(centre + support));
    for (std::int64_t j = first; j <= last; ++j) {
      const double w = cubic_kernel((static_cast<double>(j) - centre) / stretch);
      if (w == 0.0) continue;
      t.index.push_back(std::clamp<std::int64_t>(j, 0, in - 1));
      t.weight.push_back(w);
      total += w;
    }
    for (auto& w : t.weight) w /= total;
  }
  return taps;
}

Tensor resample(const Tensor& image, std::int64_t out_h, std::int64_t out_w, double scale) {
  const bool batched = image.ndim() == 4;
  const auto planes = batched ? image.dim(0) * image.dim(1) : image.dim(0);
  const auto h = image.dim(-2), w = image.dim(-1);
  const auto rows = make_taps(h, out_h, scale);
  const auto cols = make_taps(w, out_w, scale);
  const auto src = image.to_vector();
  std::vector<double> tmp(static_cast<std::size_t>(h * out_w));
  std::vector<double> dst(static_cast<std::size_t>(planes * out_h * out_w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* in = src.data() + p * h * w;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < out_w; ++x) {
        const auto& t = cols[static_cast<std::size_t>(x)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * in[y * w + t.index[k]];
        tmp[y * out_w + x] = acc;
      }
    }
    double* out = dst.data() + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto& t = rows[static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * tmp[t.index[k] * out_w + x];
        out[y * out_w + x] = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  Shape shape = image.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  return Tensor::from(shape, dst, image.dtype());
}

void require_image(const Tensor& t, const char* op) {
  if (t.ndim() != 3 && t.ndim() != 4) {
    throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Tensor degrade_bicubic(const Tensor& hr, std::int64_t factor) {
  require_image(hr, "degrade_bicubic");
  if (factor < 1) throw std::invalid_argument("degrade_bicubic: factor must be positive");
  const auto h = hr.dim(-2), w = hr.dim(-1);
  if (h % factor != 0 || w % factor != 0 || h == 0 || w == 0) {
    throw ShapeError("degrade_bicubic: extents " + shape_str(hr.shape()) +
                     " are not divisible by " + std::to_string(factor));
  }
  return resample(hr, h / factor, w / factor, 1.0 / static_cast<double>(factor));
}

Tensor upscale_bicubic(const Tensor& lr, std::int64_t factor) {
  require_image(lr, "upscale_bicubic");
  if (factor < 1) throw std::invalid_argument("upscale_bicubic: factor must be positive");
  return resample(lr, lr.dim(-2) * factor, lr.dim(-1) * factor, static_cast<double>(factor));
}

}  // namespace hetsr::data
