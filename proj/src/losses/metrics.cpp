#include "hetsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hetsr/ops.hpp"

namespace hetsr::metrics {

namespace {

constexpr std::int64_t kWindow = 11;
constexpr double kSigma = 1.5;

Tensor as_batch(const Tensor& image) {
  if (image.ndim() == 3) {
    return reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  }
  if (image.ndim() == 4) return image;
  throw ShapeError("expected an image [C,H,W] or batch [N,C,H,W], got " +
                   shape_str(image.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

double psnr_from_mse(double m, double peak) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

Tensor gaussian_window(DType dtype) {
  std::vector<double> g(kWindow);
  double total = 0.0;
  for (std::int64_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i - kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  std::vector<double> w(kWindow * kWindow);
  for (std::int64_t i = 0; i < kWindow; ++i) {
    for (std::int64_t j = 0; j < kWindow; ++j) w[i * kWindow + j] = g[i] * g[j] / (total * total);
  }
  return Tensor::from({1, 1, kWindow, kWindow}, w, dtype);
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  NoGradGuard no_grad;
  return mean(square(sub(a.detach(), b.detach()))).item();
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  return psnr_from_mse(mse(a, b), peak);
}

double mean_psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "mean_psnr");
  const Tensor x = as_batch(a.detach());
  const Tensor y = as_batch(b.detach());
  const auto n = x.dim(0);
  const auto per = x.numel() / n;
  const auto xv = x.to_vector();
  const auto yv = y.to_vector();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < per; ++j) {
      const double d = xv[i * per + j] - yv[i * per + j];
      acc += d * d;
    }
    total += psnr_from_mse(acc / static_cast<double>(per), peak);
  }
  return total / static_cast<double>(n);
}

Tensor luminance(const Tensor& image) {
  const Tensor x = as_batch(image);
  if (x.dim(1) == 1) return x;
  if (x.dim(1) != 3) {
    throw ShapeError("luminance: expected 1 or 3 channels, got " + shape_str(image.shape()));
  }
  return conv2d(x, Tensor::from({1, 3, 1, 1}, {0.299, 0.587, 0.114}, x.dtype()));
}

Tensor ssim_tensor(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "ssim");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const Tensor x = luminance(a);
  const Tensor y = luminance(b);
  const Tensor window = gaussian_window(x.dtype());
  const auto blur = [&](const Tensor& t) {
    return conv2d(pad_replicate(t, kWindow / 2), window);
  };
  const Tensor mx = blur(x);
  const Tensor my = blur(y);
  const Tensor mx2 = square(mx);
  const Tensor my2 = square(my);
  const Tensor mxy = mul(mx, my);
  const Tensor vx = sub(blur(square(x)), mx2);
  const Tensor vy = sub(blur(square(y)), my2);
  const Tensor cxy = sub(blur(mul(x, y)), mxy);
  const Tensor num = mul(add_scalar(mul_scalar(mxy, 2.0), c1), add_scalar(mul_scalar(cxy, 2.0), c2));
  const Tensor den = mul(add_scalar(add(mx2, my2), c1), add_scalar(add(vx, vy), c2));
  return mean(div(num, den));
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  NoGradGuard no_grad;
  return ssim_tensor(a.detach(), b.detach(), peak).item();
}

}  // namespace hetsr::metrics
