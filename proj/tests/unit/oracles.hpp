#pragma once

// Plain loop implementations used as references for the vectorised metrics
// and losses. They share nothing with the library beyond Tensor storage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hetsr/tensor.hpp"

namespace oracle {

struct Image {
  std::int64_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  explicit Image(const hetsr::Tensor& t)
      : n(t.dim(0)), c(t.dim(1)), h(t.dim(2)), w(t.dim(3)), v(t.to_vector()) {}
  double at(std::int64_t in, std::int64_t ic, std::int64_t y, std::int64_t x) const {
    y = std::clamp<std::int64_t>(y, 0, h - 1);
    x = std::clamp<std::int64_t>(x, 0, w - 1);
    return v[((in * c + ic) * h + y) * w + x];
  }
};

inline double mse(const hetsr::Tensor& a, const hetsr::Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

inline double psnr(const hetsr::Tensor& a, const hetsr::Tensor& b) {
  const double m = mse(a, b);
  return m == 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / m));
}

// Sobel responses with clamped borders, per image: for each channel the
// horizontal plane then the vertical plane.
inline std::vector<double> sobel_vector(const Image& img, std::int64_t in) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const double ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  std::vector<double> out;
  for (std::int64_t ic = 0; ic < img.c; ++ic) {
    for (const auto* k : {kx, ky}) {
      for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x) {
          double acc = 0.0;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) acc += k[i][j] * img.at(in, ic, y + i - 1, x + j - 1);
          out.push_back(acc);
        }
    }
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const bool za = std::sqrt(aa) < 1e-12, zb = std::sqrt(bb) < 1e-12;
  if (za || zb) return (za && zb) ? 1.0 : 0.0;
  return dot / (std::sqrt(aa) * std::sqrt(bb));
}

// Batch mean of the gradient-field cosine similarity.
inline double gradient_cosine(const hetsr::Tensor& sr, const hetsr::Tensor& hr) {
  const Image a(sr), b(hr);
  double total = 0.0;
  for (std::int64_t in = 0; in < a.n; ++in) total += cosine(sobel_vector(a, in), sobel_vector(b, in));
  return total / static_cast<double>(a.n);
}

// SSIM on BT.601 luma, 11x11 Gaussian window with sigma 1.5, clamped borders.
inline double ssim(const hetsr::Tensor& a, const hetsr::Tensor& b) {
  const Image x(a), y(b);
  const auto luma = [](const Image& img, std::int64_t in, std::int64_t r, std::int64_t col) {
    if (img.c == 1) return img.at(in, 0, r, col);
    return 0.299 * img.at(in, 0, r, col) + 0.587 * img.at(in, 1, r, col) +
           0.114 * img.at(in, 2, r, col);
  };
  double g[11], total = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
    total += g[i];
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::int64_t in = 0; in < x.n; ++in)
    for (std::int64_t r = 0; r < x.h; ++r)
      for (std::int64_t col = 0; col < x.w; ++col) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wgt = g[i] * g[j] / (total * total);
            const double px = luma(x, in, r + i - 5, col + j - 5);
            const double py = luma(y, in, r + i - 5, col + j - 5);
            mx += wgt * px;
            my += wgt * py;
            sxx += wgt * px * px;
            syy += wgt * py * py;
            sxy += wgt * px * py;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
  return acc / static_cast<double>(x.n * x.h * x.w);
}

}  // namespace oracle
