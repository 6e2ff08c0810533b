#pragma once

#include "hetsr/tensor.hpp"

namespace hetsr::data {

inline constexpr std::int64_t kScale = 4;

// Catmull-Rom cubic (a = -0.5).
double cubic_kernel(double x);

// Antialiased bicubic downsampling by `factor` of [C, H, W] or [N, C, H, W]:
// the cubic is stretched by the factor, borders are clamped, tap weights are
// normalised and the result is clamped to [0, 1]. H and W must be divisible
// by the factor.
Tensor degrade_bicubic(const Tensor& hr, std::int64_t factor = kScale);

// Plain bicubic upsampling by `factor`, clamped to [0, 1]; the interpolation
// baseline.
Tensor upscale_bicubic(const Tensor& lr, std::int64_t factor = kScale);

}  // namespace hetsr::data
