#pragma once

#include <stdexcept>
#include <string>

#include "hetsr/tensor.hpp"

namespace hetsr::data {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads a PNG as [3, H, W] with values byte/255. Grayscale and palette images
// are expanded to RGB; an alpha channel is composited onto black.
Tensor load_image(const std::string& path, DType dtype = DType::f64);

// Writes a [C, H, W] (C = 1 or 3) or [1, C, H, W] tensor as an 8-bit PNG.
// Values are clamped to [0, 1] and rounded to the nearest byte.
void save_image(const Tensor& image, const std::string& path);

}  // namespace hetsr::data
