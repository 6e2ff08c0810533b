#pragma once

#include "hetsr/tensor.hpp"

namespace hetsr::metrics {

// PSNR reported for identical images and upper bound for everything else.
inline constexpr double kPsnrCap = 100.0;

// Images are [C, H, W] or [N, C, H, W] with values on a [0, peak] scale.
double mse(const Tensor& a, const Tensor& b);
// 10 log10(peak^2 / mse), capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
// Mean of per-image PSNR over the batch axis.
double mean_psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// BT.601 luma of an RGB batch as [N, 1, H, W]; single-channel input passes
// through.
Tensor luminance(const Tensor& image);

// Mean structural similarity on luma with an 11x11 Gaussian window
// (sigma 1.5), C1 = (0.01 peak)^2, C2 = (0.03 peak)^2 and replicate borders.
// Differentiable; returns a 0-d tensor.
Tensor ssim_tensor(const Tensor& a, const Tensor& b, double peak = 1.0);
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

}  // namespace hetsr::metrics
