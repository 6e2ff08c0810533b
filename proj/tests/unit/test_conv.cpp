#include "doctest.h"
#include "hetsr/autograd.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/parallel.hpp"
#include "support.hpp"

using namespace hetsr;

namespace {

// Straight-line cross-correlation with zero padding and floor extents.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride,
                  std::int64_t pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  const auto xv = x.to_vector(), wv = w.to_vector();
  const auto bv = b.defined() ? b.to_vector() : std::vector<double>(f, 0.0);
  std::vector<double> out(n * f * oh * ow);
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t fi = 0; fi < f; ++fi)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          double acc = bv[fi];
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const auto yy = y * stride + i - pad, xx = xo * stride + j - pad;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += xv[((in * c + ci) * h + yy) * wd + xx] * wv[((fi * c + ci) * kh + i) * kw + j];
              }
          out[((in * f + fi) * oh + y) * ow + xo] = acc;
        }
  return Tensor::from({n, f, oh, ow}, out);
}

}  // namespace

TEST_SUITE("conv") {
  TEST_CASE("conv2d matches a loop implementation") {
    struct Geometry {
      Shape x, w;
      std::int64_t stride, pad;
    };
    // Few filters and many filters take different code paths.
    const std::vector<Geometry> cases = {
        {{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},   {{2, 3, 8, 8}, {7, 3, 3, 3}, 1, 1},
        {{1, 5, 9, 7}, {3, 5, 5, 5}, 1, 2},   {{2, 4, 6, 6}, {6, 4, 1, 1}, 1, 0},
        {{1, 2, 12, 12}, {3, 2, 9, 9}, 1, 4}, {{2, 3, 9, 9}, {5, 3, 3, 3}, 2, 1},
    };
    std::uint64_t seed = 1;
    for (const auto& g : cases) {
      const Tensor x = test::random_tensor(g.x, seed++);
      const Tensor w = test::random_tensor(g.w, seed++);
      const Tensor b = test::random_tensor({g.w[0]}, seed++);
      const Tensor out = conv2d(x, w, b, {g.stride, g.pad});
      const Tensor ref = naive_conv(x, w, b, g.stride, g.pad);
      REQUIRE(out.shape() == ref.shape());
      CHECK(test::max_abs_diff(out, ref) < 1e-12);
    }
  }

  TEST_CASE("conv2d gradients match finite differences") {
    const Tensor x = test::random_tensor({2, 3, 8, 8}, 10);
    Tensor w = test::random_tensor({4, 3, 3, 3}, 11);
    Tensor b = test::random_tensor({4}, 12);
    const auto f = [&](const Tensor& input) { return sum(conv2d(input, w, b, {1, 1})); };
    CHECK(check_gradients(f, x) <= 1e-5);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    CHECK(check_parameter_gradients([&] { return sum(conv2d(x, w, b, {1, 1})); }, w) <= 1e-5);
    CHECK(check_parameter_gradients([&] { return sum(conv2d(x, w, b, {1, 1})); }, b) <= 1e-5);
  }

  TEST_CASE("strided and wide-kernel gradients match finite differences") {
    const Tensor x = test::random_tensor({1, 2, 9, 9}, 20);
    const Tensor probe = test::random_tensor({1, 6, 5, 5}, 21);
    Tensor w = test::random_tensor({6, 2, 3, 3}, 22);
    w.set_requires_grad(true);
    const auto f = [&](const Tensor& input) { return sum(mul(conv2d(input, w, {}, {2, 1}), probe)); };
    CHECK(check_gradients(f, x) <= 1e-5);
    CHECK(check_parameter_gradients([&] { return f(x); }, w) <= 1e-5);

    const Tensor x2 = test::random_tensor({1, 2, 10, 10}, 23);
    Tensor w2 = test::random_tensor({3, 2, 9, 9}, 24, -0.2, 0.2);
    w2.set_requires_grad(true);
    const Tensor p2 = test::random_tensor({1, 3, 10, 10}, 25);
    const auto f2 = [&](const Tensor& input) { return sum(mul(conv2d(input, w2, {}, {1, 4}), p2)); };
    CHECK(check_gradients(f2, x2) <= 1e-5);
    CHECK(check_parameter_gradients([&] { return f2(x2); }, w2) <= 1e-5);
  }

  TEST_CASE("double backward through conv2d") {
    Tensor x = test::random_tensor({1, 2, 6, 6}, 30);
    x.set_requires_grad(true);
    Tensor w = test::random_tensor({3, 2, 3, 3}, 31);
    w.set_requires_grad(true);
    // d/dw of |d conv/dx|^2 compared against finite differences.
    const auto f = [&] {
      GradModeGuard recording(true);
      const Tensor gx = grad(sum(square(conv2d(x, w, {}, {1, 1}))), {x}, true)[0];
      return sum(square(gx));
    };
    CHECK(check_parameter_gradients(f, w) <= 1e-5);
  }

  TEST_CASE("untiled strides are rejected unless truncation is requested") {
    const Tensor x = Tensor::zeros({1, 1, 8, 8});
    const Tensor w = Tensor::zeros({1, 1, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, {}, {2, 1}), ShapeError);
    CHECK(conv2d(x, w, {}, {2, 1, true}).shape() == Shape{1, 1, 4, 4});
    CHECK(conv_output_extent(8, 3, 2, 1, true) == 4);
    CHECK(conv_output_extent(9, 3, 2, 1) == 5);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), w), ShapeError);
  }

  TEST_CASE("truncated strides agree with the loop implementation") {
    const Tensor x = test::random_tensor({2, 3, 8, 8}, 40);
    const Tensor w = test::random_tensor({5, 3, 3, 3}, 41);
    CHECK(test::max_abs_diff(conv2d(x, w, {}, {2, 1, true}), naive_conv(x, w, {}, 2, 1)) < 1e-12);
  }

  TEST_CASE("results do not depend on the thread count") {
    const Tensor x = test::random_tensor({4, 3, 10, 10}, 50);
    Tensor w = test::random_tensor({2, 3, 3, 3}, 51);
    w.set_requires_grad(true);
    const auto run = [&] {
      w.zero_grad();
      backward(sum(square(conv2d(x, w, {}, {1, 1}))));
      return w.grad().to_vector();
    };
    const int before = num_threads();
    set_num_threads(1);
    const auto one = run();
    set_num_threads(4);
    const auto four = run();
    set_num_threads(before);
    CHECK(one == four);
  }
}
