#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "hetsr/dataset.hpp"
#include "hetsr/image_io.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/resample.hpp"
#include "support.hpp"

using namespace hetsr;

namespace {

Tensor crop(const Tensor& img, std::int64_t top, std::int64_t left, std::int64_t h, std::int64_t w) {
  const auto c = img.dim(0), H = img.dim(1), W = img.dim(2);
  const auto v = img.to_vector();
  std::vector<double> out;
  for (std::int64_t ic = 0; ic < c; ++ic)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out.push_back(v[(ic * H + top + y) * W + left + x]);
  return Tensor::from({c, h, w}, out);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("cubic kernel values") {
    CHECK(data::cubic_kernel(0.0) == 1.0);
    CHECK(data::cubic_kernel(1.0) == 0.0);
    CHECK(data::cubic_kernel(2.0) == 0.0);
    CHECK(data::cubic_kernel(0.5) == doctest::Approx(0.5625));
    CHECK(data::cubic_kernel(1.5) == doctest::Approx(-0.0625));
    CHECK(data::cubic_kernel(-1.5) == data::cubic_kernel(1.5));
  }

  TEST_CASE("PNG round trip is exact on byte values") {
    const auto dir = test::scratch_dir("png");
    Rng rng(1);
    std::vector<double> v(3 * 5 * 7);
    for (auto& e : v) e = static_cast<double>(rng.uniform_int(256)) / 255.0;
    const Tensor img = Tensor::from({3, 5, 7}, v);
    data::save_image(img, dir + "/a.png");
    const Tensor back = data::load_image(dir + "/a.png");
    CHECK(back.shape() == Shape{3, 5, 7});
    CHECK(test::max_abs_diff(back, img) <= 1e-15);
    CHECK_THROWS_AS(data::load_image(dir + "/missing.png"), data::ImageError);
    CHECK_THROWS_AS(data::save_image(img, dir + "/no/such/dir.png"), data::ImageError);
  }

  TEST_CASE("saving clamps and rounds") {
    const auto dir = test::scratch_dir("png_clamp");
    data::save_image(Tensor::from({1, 1, 3}, {-0.5, 0.5, 7.0}), dir + "/g.png");
    const auto v = data::load_image(dir + "/g.png").to_vector();
    CHECK(v[0] == 0.0);
    CHECK(v[1] == doctest::Approx(128.0 / 255.0));
    CHECK(v[2] == 1.0);
    CHECK(v[3] == 0.0);  // grayscale expands to RGB
  }

  TEST_CASE("bicubic degradation keeps constant images constant") {
    const Tensor flat = Tensor::full({3, 16, 20}, 0.37);
    const Tensor lr = data::degrade_bicubic(flat);
    CHECK(lr.shape() == Shape{3, 4, 5});
    for (double v : lr.to_vector()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    const Tensor up = data::upscale_bicubic(lr);
    CHECK(up.shape() == Shape{3, 16, 20});
    for (double v : up.to_vector()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
  }

  TEST_CASE("bicubic degradation rejects extents not divisible by four") {
    CHECK_THROWS_AS(data::degrade_bicubic(Tensor::zeros({3, 10, 12})), ShapeError);
    CHECK_THROWS_AS(data::degrade_bicubic(Tensor::zeros({12, 12})), ShapeError);
  }

  TEST_CASE("degradation is translation-equivariant for 4-pixel shifts") {
    const Tensor img = data::synthetic_image(64, 64, 3);
    const Tensor a = data::degrade_bicubic(crop(img, 0, 0, 48, 48));
    const Tensor b = data::degrade_bicubic(crop(img, 4, 8, 48, 48));
    // b is a shifted by (1, 2) low-resolution pixels; compare away from borders.
    CHECK(test::max_abs_diff(crop(a, 4, 5, 4, 4), crop(b, 3, 3, 4, 4)) <= 1e-12);
  }

  TEST_CASE("degradation and upscaling stay in range") {
    const Tensor img = test::random_tensor({3, 32, 32}, 4, 0, 1);
    for (const Tensor& t : {data::degrade_bicubic(img), data::upscale_bicubic(data::degrade_bicubic(img))}) {
      for (double v : t.to_vector()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("patch extraction is seeded and in bounds") {
    const auto a = data::patch_corners(100, 80, 32, 50, 9);
    CHECK(a == data::patch_corners(100, 80, 32, 50, 9));
    CHECK(a != data::patch_corners(100, 80, 32, 50, 10));
    for (const auto& c : a) {
      CHECK(c.top >= 0);
      CHECK(c.top + 32 <= 100);
      CHECK(c.left + 32 <= 80);
    }
    const Tensor img = data::synthetic_image(40, 44, 1);
    const auto patches = data::extract_patches(img, 32, 3, 2);
    const auto corners = data::patch_corners(40, 44, 32, 3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(patches[i].to_vector() == crop(img, corners[i].top, corners[i].left, 32, 32).to_vector());
    }
    CHECK_THROWS_AS(data::extract_patches(img, 48, 1, 0), ShapeError);
  }

  TEST_CASE("pairs satisfy the x4 relation") {
    const Tensor img = data::synthetic_image(64, 64, 5);
    for (const auto& p : data::make_pairs(data::extract_patches(img, 32, 4, 6))) {
      CHECK(p.hr.shape() == Shape{3, 32, 32});
      CHECK(p.lr.shape() == Shape{3, 8, 8});
      CHECK(p.lr.to_vector() == data::degrade_bicubic(p.hr).to_vector());
    }
  }

  TEST_CASE("batch iterator visits every pair once per epoch") {
    const Tensor img = data::synthetic_image(64, 64, 7);
    const auto pairs = data::make_pairs(data::extract_patches(img, 32, 10, 8));
    data::BatchIterator it(pairs, 4, 11);
    std::multiset<std::size_t> seen;
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 3; ++i) {
      CHECK(it.epoch() == 0);
      const auto b = it.next();
      sizes.push_back(b.indices.size());
      CHECK(b.lr.shape() == Shape{static_cast<std::int64_t>(b.indices.size()), 3, 8, 8});
      seen.insert(b.indices.begin(), b.indices.end());
    }
    CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
    CHECK(seen.size() == 10);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
    CHECK(it.epoch_order(1) != it.epoch_order(0));
  }

  TEST_CASE("batch streams are bit-identical for identical seeds and resumable") {
    const Tensor img = data::synthetic_image(64, 64, 7);
    const auto pairs = data::make_pairs(data::extract_patches(img, 32, 10, 8));
    data::BatchIterator a(pairs, 3, 5), b(pairs, 3, 5);
    std::vector<std::vector<double>> stream;
    for (int i = 0; i < 8; ++i) {
      const auto x = a.next(), y = b.next();
      CHECK(x.hr.to_vector() == y.hr.to_vector());
      stream.push_back(x.hr.to_vector());
    }
    data::BatchIterator c(pairs, 3, 5);
    for (int i = 0; i < 5; ++i) c.next();
    data::BatchIterator d(pairs, 3, 5);
    d.seek(c.epoch(), c.position());
    for (int i = 5; i < 8; ++i) CHECK(d.next().hr.to_vector() == stream[i]);
  }

  TEST_CASE("dataset loading splits files and reports missing folders") {
    const auto dir = test::scratch_dir("dataset");
    data::write_synthetic_dataset(dir, 10, 48, 48, 1);
    data::DatasetSpec spec;
    spec.root = dir;
    spec.patch = 32;
    spec.patches_per_image = 2;
    spec.split = 0.8;
    const auto ds = data::load_dataset(spec);
    CHECK(ds.train_files.size() == 8);
    CHECK(ds.val_files.size() == 2);
    CHECK(ds.train.size() == 16);
    CHECK(ds.val.size() == 4);
    for (const auto& f : ds.val_files) {
      CHECK(std::find(ds.train_files.begin(), ds.train_files.end(), f) == ds.train_files.end());
    }
    const auto again = data::load_dataset(spec);
    CHECK(again.train_files == ds.train_files);
    CHECK(again.train[3].hr.to_vector() == ds.train[3].hr.to_vector());

    spec.root = dir + "/absent";
    try {
      data::load_dataset(spec);
      FAIL("expected DataError");
    } catch (const data::DataError& e) {
      CHECK(std::string(e.what()).find(dir + "/absent") != std::string::npos);
    }
    spec.root = dir;
    spec.pattern = "*.jpg";
    CHECK_THROWS_AS(data::load_dataset(spec), data::DataError);
    spec.patch = 30;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }

  TEST_CASE("evaluation pairs crop to a multiple of four") {
    const auto dir = test::scratch_dir("eval_pairs");
    data::save_image(data::synthetic_image(30, 37, 2), dir + "/odd.png");
    const auto pairs = data::load_eval_pairs(dir, "*.png");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].hr.shape() == Shape{3, 28, 36});
    CHECK(pairs[0].lr.shape() == Shape{3, 7, 9});
  }

  TEST_CASE("synthetic images are deterministic and in range") {
    const Tensor a = data::synthetic_image(24, 32, 4);
    CHECK(a.shape() == Shape{3, 24, 32});
    CHECK(a.to_vector() == data::synthetic_image(24, 32, 4).to_vector());
    CHECK(a.to_vector() != data::synthetic_image(24, 32, 5).to_vector());
    for (double v : a.to_vector()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
