#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsr/tensor.hpp"

namespace hetsr::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImagePair {
  Tensor lr;  // [3, h, w]
  Tensor hr;  // [3, 4h, 4w]
  std::string source;
};

struct DatasetSpec {
  std::string root;
  std::string pattern = "*.png";
  std::int64_t patch = 96;  // HR patch extent
  std::int64_t patches_per_image = 16;
  std::uint64_t seed = 0;
  double split = 0.9;  // fraction of images used for training

  void validate() const;
};

struct PatchCorner {
  std::int64_t top = 0;
  std::int64_t left = 0;
  bool operator==(const PatchCorner&) const = default;
};

// Seeded uniform top-left corners of `count` patch x patch windows.
std::vector<PatchCorner> patch_corners(std::int64_t height, std::int64_t width,
                                       std::int64_t patch, std::int64_t count,
                                       std::uint64_t seed);
// Crops of a [C, H, W] image at patch_corners(H, W, patch, count, seed).
std::vector<Tensor> extract_patches(const Tensor& image, std::int64_t patch, std::int64_t count,
                                    std::uint64_t seed);
// Pairs each HR patch with its bicubic x4 degradation.
std::vector<ImagePair> make_pairs(const std::vector<Tensor>& hr_patches,
                                  const std::string& source = "");

struct Batch {
  Tensor lr;  // [N, 3, h, w]
  Tensor hr;  // [N, 3, 4h, 4w]
  std::vector<std::size_t> indices;
};

// Stacks the selected pairs into batch tensors of the given dtype.
Batch stack_pairs(const std::vector<ImagePair>& pairs, const std::vector<std::size_t>& indices,
                  DType dtype);

// Epoch-wise shuffled mini-batches. Each epoch's order is drawn from
// Rng::derive(seed, epoch); the last batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const std::vector<ImagePair>& pairs, std::int64_t batch_size, std::uint64_t seed,
                DType dtype = DType::f64);

  // Next batch, rolling into the following epoch as needed.
  Batch next();
  std::int64_t epoch() const { return epoch_; }
  std::int64_t position() const { return position_; }
  // Resumes at a saved (epoch, position) cursor.
  void seek(std::int64_t epoch, std::int64_t position);
  std::vector<std::size_t> epoch_order(std::int64_t epoch) const;

 private:
  const std::vector<ImagePair>* pairs_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  DType dtype_;
  std::int64_t epoch_ = 0;
  std::int64_t position_ = 0;
  std::vector<std::size_t> order_;
};

// All batches of one epoch.
std::vector<Batch> batches(const std::vector<ImagePair>& pairs, std::int64_t batch_size,
                           std::uint64_t seed, std::int64_t epoch = 0, DType dtype = DType::f64);

// Sorted paths of regular files under `root` (not recursive) whose names
// match the glob `pattern`.
std::vector<std::string> list_images(const std::string& root, const std::string& pattern);

struct Dataset {
  std::vector<ImagePair> train;
  std::vector<ImagePair> val;
  std::vector<std::string> train_files;
  std::vector<std::string> val_files;
};

// Splits the image files by a seeded shuffle, then extracts patch pairs from
// each. With a single image it serves both splits.
Dataset load_dataset(const DatasetSpec& spec);

// Whole-image pairs for evaluation: each image is cropped to a multiple of 4
// and degraded.
std::vector<ImagePair> load_eval_pairs(const std::string& root, const std::string& pattern);

// Deterministic test image of rectangles, discs and stripes in [0, 1].
Tensor synthetic_image(std::int64_t height, std::int64_t width, std::uint64_t seed);
// Writes `count` synthetic PNGs named img_000.png, img_001.png, ... into dir.
std::vector<std::string> write_synthetic_dataset(const std::string& dir, std::int64_t count,
                                                 std::int64_t height, std::int64_t width,
                                                 std::uint64_t seed);

}  // namespace hetsr::data
