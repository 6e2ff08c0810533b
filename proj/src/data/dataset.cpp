#include "hetsr/dataset.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "hetsr/image_io.hpp"
#include "hetsr/random.hpp"
#include "hetsr/resample.hpp"

namespace hetsr::data {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  if (patch < 32 || patch % kScale != 0) {
    throw std::invalid_argument("DatasetSpec: patch must be >= 32 and divisible by 4, got " +
                                std::to_string(patch));
  }
  if (patches_per_image < 1) {
    throw std::invalid_argument("DatasetSpec: patches_per_image must be positive");
  }
  if (!(split > 0.0 && split < 1.0)) {
    throw std::invalid_argument("DatasetSpec: split must lie in (0, 1)");
  }
}

std::vector<PatchCorner> patch_corners(std::int64_t height, std::int64_t width,
                                       std::int64_t patch, std::int64_t count,
                                       std::uint64_t seed) {
  if (patch < 1 || count < 0) {
    throw std::invalid_argument("extract_patches: patch must be positive and count non-negative");
  }
  if (height < patch || width < patch) {
    throw ShapeError("extract_patches: image " + std::to_string(height) + "x" +
                     std::to_string(width) + " is smaller than patch " + std::to_string(patch));
  }
  Rng rng(seed);
  std::vector<PatchCorner> out(static_cast<std::size_t>(count));
  for (auto& c : out) {
    c.top = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(height - patch + 1)));
    c.left = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(width - patch + 1)));
  }
  return out;
}

namespace {

Tensor crop(const Tensor& image, std::int64_t top, std::int64_t left, std::int64_t h,
            std::int64_t w) {
  const auto c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  const auto src = image.to_vector();
  std::vector<double> dst(static_cast<std::size_t>(c * h * w));
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t y = 0; y < h; ++y) {
      const auto* row = src.data() + (k * ih + top + y) * iw + left;
      std::copy(row, row + w, dst.begin() + (k * h + y) * w);
    }
  }
  return Tensor::from({c, h, w}, dst, image.dtype());
}

}  // namespace

std::vector<Tensor> extract_patches(const Tensor& image, std::int64_t patch, std::int64_t count,
                                    std::uint64_t seed) {
  if (image.ndim() != 3) {
    throw ShapeError("extract_patches: expected [C,H,W], got " + shape_str(image.shape()));
  }
  std::vector<Tensor> out;
  for (const auto& c : patch_corners(image.dim(1), image.dim(2), patch, count, seed)) {
    out.push_back(crop(image, c.top, c.left, patch, patch));
  }
  return out;
}

std::vector<ImagePair> make_pairs(const std::vector<Tensor>& hr_patches, const std::string& source) {
  std::vector<ImagePair> out(hr_patches.size());
  // Each slot is written by exactly one iteration, so the result does not
  // depend on scheduling.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < hr_patches.size(); ++i) {
    out[i] = {degrade_bicubic(hr_patches[i]), hr_patches[i], source};
  }
  return out;
}

Batch stack_pairs(const std::vector<ImagePair>& pairs, const std::vector<std::size_t>& indices,
                  DType dtype) {
  if (indices.empty()) throw DataError("stack_pairs: empty batch");
  const auto& first = pairs.at(indices.front());
  const Shape lr_shape = first.lr.shape();
  const Shape hr_shape = first.hr.shape();
  const auto n = static_cast<std::int64_t>(indices.size());
  std::vector<double> lr, hr;
  lr.reserve(static_cast<std::size_t>(n * first.lr.numel()));
  hr.reserve(static_cast<std::size_t>(n * first.hr.numel()));
  for (auto i : indices) {
    const auto& p = pairs.at(i);
    if (p.lr.shape() != lr_shape || p.hr.shape() != hr_shape) {
      throw ShapeError("stack_pairs: pairs in one batch must share extents");
    }
    const auto a = p.lr.to_vector();
    const auto b = p.hr.to_vector();
    lr.insert(lr.end(), a.begin(), a.end());
    hr.insert(hr.end(), b.begin(), b.end());
  }
  Shape ls{n}, hs{n};
  ls.insert(ls.end(), lr_shape.begin(), lr_shape.end());
  hs.insert(hs.end(), hr_shape.begin(), hr_shape.end());
  return {Tensor::from(ls, lr, dtype), Tensor::from(hs, hr, dtype), indices};
}

BatchIterator::BatchIterator(const std::vector<ImagePair>& pairs, std::int64_t batch_size,
                             std::uint64_t seed, DType dtype)
    : pairs_(&pairs), batch_size_(batch_size), seed_(seed), dtype_(dtype) {
  if (pairs.empty()) throw DataError("batches: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
  order_ = epoch_order(0);
}

std::vector<std::size_t> BatchIterator::epoch_order(std::int64_t epoch) const {
  std::vector<std::size_t> order(pairs_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::derive(seed_, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

void BatchIterator::seek(std::int64_t epoch, std::int64_t position) {
  if (epoch < 0 || position < 0 || position > static_cast<std::int64_t>(pairs_->size())) {
    throw std::invalid_argument("BatchIterator::seek: cursor out of range");
  }
  epoch_ = epoch;
  position_ = position;
  order_ = epoch_order(epoch_);
}

Batch BatchIterator::next() {
  const auto n = static_cast<std::int64_t>(order_.size());
  if (position_ >= n) {
    ++epoch_;
    position_ = 0;
    order_ = epoch_order(epoch_);
  }
  const auto end = std::min(n, position_ + batch_size_);
  std::vector<std::size_t> idx(order_.begin() + position_, order_.begin() + end);
  position_ = end;
  return stack_pairs(*pairs_, idx, dtype_);
}

std::vector<Batch> batches(const std::vector<ImagePair>& pairs, std::int64_t batch_size,
                           std::uint64_t seed, std::int64_t epoch, DType dtype) {
  BatchIterator it(pairs, batch_size, seed, dtype);
  it.seek(epoch, 0);
  std::vector<Batch> out;
  while (it.epoch() == epoch && it.position() < static_cast<std::int64_t>(pairs.size())) {
    out.push_back(it.next());
  }
  return out;
}

std::vector<std::string> list_images(const std::string& root, const std::string& pattern) {
  if (!fs::is_directory(root)) {
    throw DataError("dataset directory '" + root + "' does not exist");
  }
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset load_dataset(const DatasetSpec& spec) {
  spec.validate();
  auto files = list_images(spec.root, spec.pattern);
  if (files.empty()) {
    throw DataError("no images matching '" + spec.pattern + "' in '" + spec.root + "'");
  }
  Dataset ds;
  if (files.size() == 1) {
    ds.train_files = ds.val_files = files;
  } else {
    Rng rng(Rng::derive(spec.seed, 0x5eed));
    rng.shuffle(files);
    const auto n = files.size();
    auto n_train = static_cast<std::size_t>(std::llround(spec.split * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    ds.train_files.assign(files.begin(), files.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.val_files.assign(files.begin() + static_cast<std::ptrdiff_t>(n_train), files.end());
  }
  const auto collect = [&](const std::vector<std::string>& list, std::uint64_t stream,
                           std::vector<ImagePair>& out) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Tensor img = load_image(list[i]);
      const auto seed = Rng::derive(spec.seed, stream + i);
      auto pairs = make_pairs(extract_patches(img, spec.patch, spec.patches_per_image, seed),
                              fs::path(list[i]).filename().string());
      out.insert(out.end(), pairs.begin(), pairs.end());
    }
  };
  collect(ds.train_files, 1000, ds.train);
  collect(ds.val_files, 1000000, ds.val);
  return ds;
}

std::vector<ImagePair> load_eval_pairs(const std::string& root, const std::string& pattern) {
  const auto files = list_images(root, pattern);
  if (files.empty()) throw DataError("no images matching '" + pattern + "' in '" + root + "'");
  std::vector<ImagePair> out;
  for (const auto& f : files) {
    const Tensor img = load_image(f);
    const auto h = img.dim(1) / kScale * kScale, w = img.dim(2) / kScale * kScale;
    if (h < kScale * 3 || w < kScale * 3) {
      throw DataError("image '" + f + "' is too small to evaluate");
    }
    const Tensor hr = crop(img, 0, 0, h, w);
    out.push_back({degrade_bicubic(hr), hr, fs::path(f).filename().string()});
  }
  return out;
}

Tensor synthetic_image(std::int64_t height, std::int64_t width, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(static_cast<std::size_t>(3 * height * width));
  const auto set = [&](std::int64_t y, std::int64_t x, const double* rgb) {
    for (int c = 0; c < 3; ++c) px[(c * height + y) * width + x] = rgb[c];
  };
  // Smooth background ramp.
  double base[3], slope[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.5);
    slope[c] = rng.uniform(-0.2, 0.2);
  }
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      double rgb[3];
      const double t = static_cast<double>(x + y) / static_cast<double>(height + width);
      for (int c = 0; c < 3; ++c) rgb[c] = base[c] + slope[c] * t;
      set(y, x, rgb);
    }
  }
  const auto shapes = 6 + static_cast<int>(rng.uniform_int(6));
  for (int s = 0; s < shapes; ++s) {
    double rgb[3];
    for (double& v : rgb) v = rng.uniform(0.05, 0.95);
    const auto kind = rng.uniform_int(3);
    const double cy = rng.uniform(0, static_cast<double>(height));
    const double cx = rng.uniform(0, static_cast<double>(width));
    const double ry = rng.uniform(0.05, 0.3) * static_cast<double>(height);
    const double rx = rng.uniform(0.05, 0.3) * static_cast<double>(width);
    const double period = rng.uniform(3.0, 9.0);
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry;
        const double dx = (static_cast<double>(x) - cx) / rx;
        bool inside = false;
        if (kind == 0) {
          inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        } else if (kind == 1) {
          inside = dy * dy + dx * dx <= 1.0;
        } else {
          // Stripes clipped to a box.
          inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0 &&
                   std::fmod(static_cast<double>(x + y), period) < period / 2.0;
        }
        if (inside) set(y, x, rgb);
      }
    }
  }
  for (auto& v : px) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from({3, height, width}, px);
}

std::vector<std::string> write_synthetic_dataset(const std::string& dir, std::int64_t count,
                                                 std::int64_t height, std::int64_t width,
                                                 std::uint64_t seed) {
  fs::create_directories(dir);
  std::vector<std::string> out;
  for (std::int64_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03lld.png", static_cast<long long>(i));
    const auto path = (fs::path(dir) / name).string();
    save_image(synthetic_image(height, width, Rng::derive(seed, static_cast<std::uint64_t>(i))),
               path);
    out.push_back(path);
  }
  return out;
}

}  // namespace hetsr::data
