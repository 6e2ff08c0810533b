#include "hetsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace hetsr::data {

namespace {

struct ImageGuard {
  png_image* image;
  ~ImageGuard() { png_image_free(image); }
};

}  // namespace

Tensor load_image(const std::string& path, DType dtype) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ImageError("load_image: no such file '" + path + "'");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  ImageGuard guard{&image};
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageError("load_image: '" + path + "' is not a readable PNG (" + image.message + ")");
  }
  image.format = PNG_FORMAT_RGB;
  const auto h = static_cast<std::int64_t>(image.height);
  const auto w = static_cast<std::int64_t>(image.width);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, pixels.data(), 0, nullptr)) {
    throw ImageError("load_image: failed to decode '" + path + "' (" + image.message + ")");
  }
  std::vector<double> values(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        values[(c * h + y) * w + x] = pixels[(y * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return Tensor::from({3, h, w}, values, dtype);
}

void save_image(const Tensor& image, const std::string& path) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw ShapeError("save_image: expected [1|3, H, W], got " + shape_str(image.shape()));
  }
  const auto c = s[0], h = s[1], w = s[2];
  const auto values = image.to_vector();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(c * h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t k = 0; k < c; ++k) {
        const double v = values[(k * h + y) * w + x];
        const double clamped = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
        pixels[(y * w + x) * c + k] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
      }
    }
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw ImageError("save_image: directory '" + parent.string() + "' does not exist");
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(w);
  out.height = static_cast<png_uint_32>(h);
  out.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  ImageGuard guard{&out};
  if (!png_image_write_to_file(&out, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw ImageError("save_image: cannot write '" + path + "' (" + out.message + ")");
  }
}

}  // namespace hetsr::data
