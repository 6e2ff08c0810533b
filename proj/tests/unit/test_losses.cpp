#include <cmath>

#include "doctest.h"
#include "hetsr/autograd.hpp"
#include "hetsr/losses.hpp"
#include "hetsr/network.hpp"
#include "hetsr/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hetsr;

namespace {

// Smooth critic, so second derivatives are well defined everywhere.
struct QuadraticCritic {
  Tensor w;
  Tensor operator()(const Tensor& x) const {
    const auto n = x.dim(0);
    Tensor h = conv2d(x, w, {}, {1, 1});
    return reshape(sum_to(square(h), {n, 1, 1, 1}), {n});
  }
};

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("Sobel responses of a ramp") {
    // Intensity grows by 1 per column: G_x = 8 inside, 4 at the clamped edges.
    std::vector<double> v(5 * 5);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) v[y * 5 + x] = x;
    const auto field = loss::spatial_gradient(Tensor::from({1, 1, 5, 5}, v));
    const auto gx = field.gx.to_vector();
    CHECK(gx[2 * 5 + 2] == 8.0);
    CHECK(gx[2 * 5 + 0] == 4.0);
    CHECK(gx[2 * 5 + 4] == 4.0);
    for (double g : field.gy.to_vector()) CHECK(g == 0.0);
  }

  TEST_CASE("packed gradients match the loop oracle") {
    const Tensor img = test::random_tensor({2, 3, 6, 7}, 1, 0, 1);
    const auto packed = loss::packed_gradients(img).to_vector();
    const oracle::Image ref(img);
    for (std::int64_t n = 0; n < 2; ++n) {
      const auto expected = oracle::sobel_vector(ref, n);
      REQUIRE(expected.size() == 3 * 2 * 6 * 7);
      for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(std::abs(packed[n * expected.size() + i] - expected[i]) <= 1e-12);
    }
  }

  TEST_CASE("gradient cosine and content loss match loop oracles on 100 images") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Tensor a = test::random_tensor({1, 3, 16, 16}, 2 * seed + 1000, 0, 1);
      const Tensor b = test::random_tensor({1, 3, 16, 16}, 2 * seed + 1001, 0, 1);
      CHECK(std::abs(loss::gradient_cosine_loss(a, b).item() - oracle::gradient_cosine(a, b)) <= 1e-6);
      CHECK(std::abs(loss::content_loss(a, b).item() - oracle::mse(a, b)) <= 1e-6);
    }
    const Tensor batch_a = test::random_tensor({4, 3, 8, 8}, 7, 0, 1);
    const Tensor batch_b = test::random_tensor({4, 3, 8, 8}, 8, 0, 1);
    CHECK(std::abs(loss::gradient_cosine_loss(batch_a, batch_b).item() -
                   oracle::gradient_cosine(batch_a, batch_b)) <= 1e-12);
  }

  TEST_CASE("identical images have similarity one and a zero mu-term") {
    const Tensor img = test::random_tensor({2, 3, 12, 12}, 3, 0, 1);
    CHECK(loss::gradient_cosine_loss(img, img).item() == 1.0);
    loss::LossConfig config;
    config.lambda = 0.0;
    config.mu = 1.0;
    const auto l = loss::generator_loss(img, img, Tensor::zeros({2}), config);
    CHECK(l.total.item() == 0.0);
    CHECK(l.content.item() == 0.0);
    for (double scale : {1e-5, 1.0, 1e4}) {
      const Tensor v = mul_scalar(test::random_tensor({257}, 4), scale);
      CHECK(loss::cosine_similarity(v, v).item() == 1.0);
      CHECK(loss::cosine_similarity(v, neg(v)).item() == -1.0);
    }
  }

  TEST_CASE("constant images use the zero-vector convention") {
    const Tensor flat = Tensor::full({1, 3, 5, 5}, 0.5);
    const Tensor textured = test::random_tensor({1, 3, 5, 5}, 4, 0, 1);
    CHECK(loss::gradient_cosine_loss(flat, flat).item() == 1.0);
    CHECK(loss::gradient_cosine_loss(flat, textured).item() == 0.0);
  }

  TEST_CASE("cosine similarity stays in [-1, 1] and ignores positive scaling") {
    Rng rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
      const auto len = static_cast<std::int64_t>(1 + rng.uniform_int(16));
      const double scale = std::pow(10.0, rng.uniform(-6, 6));
      const Tensor x = mul_scalar(Tensor::uniform({len}, -1, 1, rng), scale);
      const Tensor y = Tensor::uniform({len}, -1, 1, rng);
      const double c = loss::cosine_similarity(x, y).item();
      REQUIRE(c >= -1.0 - 1e-12);
      REQUIRE(c <= 1.0 + 1e-12);
      if (trial % 100 == 0) {
        const double a = rng.uniform(0.01, 100), b = rng.uniform(0.01, 100);
        CHECK(loss::cosine_similarity(mul_scalar(x, a), mul_scalar(y, b)).item() ==
              doctest::Approx(c).epsilon(1e-12));
      }
    }
    CHECK(loss::cosine_similarity(Tensor::from({2}, {1, 0}), Tensor::from({2}, {-3, 0})).item() ==
          -1.0);
  }

  TEST_CASE("gradient cosine loss gradients match finite differences") {
    const Tensor hr = test::random_tensor({2, 3, 6, 6}, 10, 0, 1);
    const Tensor sr = test::random_tensor({2, 3, 6, 6}, 11, 0, 1);
    CHECK(check_gradients([&](const Tensor& t) { return loss::gradient_cosine_loss(t, hr); }, sr) <=
          1e-5);
    CHECK(check_gradients([&](const Tensor& t) { return loss::content_loss(t, hr); }, sr) <= 1e-5);
  }

  TEST_CASE("gradient penalty of a linear critic has a closed form") {
    // critic(x) = sum(x): the input gradient is all ones, norm sqrt(48).
    const auto critic = [](const Tensor& x) {
      return reshape(sum_to(x, {x.dim(0), 1, 1, 1}), {x.dim(0)});
    };
    const Tensor real = test::random_tensor({2, 3, 4, 4}, 12);
    const Tensor fake = test::random_tensor({2, 3, 4, 4}, 13);
    const double gp = loss::gradient_penalty(critic, real, fake, 10.0, {0.3, 0.8}).item();
    const double expected = 10.0 * (std::sqrt(48.0) - 1.0) * (std::sqrt(48.0) - 1.0);
    CHECK(gp == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss::gradient_penalty(critic, real, fake, 0.0, {0.3, 0.8}).item() == 0.0);
  }

  TEST_CASE("gradient penalty matches a loop oracle for a quadratic critic") {
    // critic(x) = sum(h^2), h = conv(x, w): grad_x = 2 conv^T(h, w).
    // With a 1x1 kernel this is grad = 2 w^T w x channel-wise.
    Tensor w = Tensor::from({2, 3, 1, 1}, {0.5, -0.2, 0.1, 0.3, 0.4, -0.6});
    const QuadraticCritic critic{w};
    const Tensor real = test::random_tensor({2, 3, 2, 2}, 14);
    const Tensor fake = test::random_tensor({2, 3, 2, 2}, 15);
    const std::vector<double> eps = {0.25, 0.75};
    const auto rv = real.to_vector(), fv = fake.to_vector(), wv = w.to_vector();
    double expected = 0.0;
    for (int n = 0; n < 2; ++n) {
      double norm2 = 0.0;
      for (int p = 0; p < 4; ++p) {
        double x[3];
        for (int c = 0; c < 3; ++c) {
          const auto idx = (n * 3 + c) * 4 + p;
          x[c] = eps[n] * rv[idx] + (1 - eps[n]) * fv[idx];
        }
        for (int c = 0; c < 3; ++c) {
          double g = 0.0;
          for (int f = 0; f < 2; ++f) {
            double h = 0.0;
            for (int k = 0; k < 3; ++k) h += wv[f * 3 + k] * x[k];
            g += 2 * h * wv[f * 3 + c];
          }
          norm2 += g * g;
        }
      }
      expected += (std::sqrt(norm2) - 1) * (std::sqrt(norm2) - 1);
    }
    expected = 10.0 * expected / 2.0;
    CHECK(loss::gradient_penalty(critic, real, fake, 10.0, eps).item() ==
          doctest::Approx(expected).epsilon(1e-9));
  }

  TEST_CASE("gradient penalty is differentiable in the critic parameters") {
    Tensor w = test::random_tensor({2, 3, 3, 3}, 16, -0.5, 0.5);
    w.set_requires_grad(true);
    const QuadraticCritic critic{w};
    const Tensor real = test::random_tensor({2, 3, 4, 4}, 17);
    const Tensor fake = test::random_tensor({2, 3, 4, 4}, 18);
    CHECK(check_parameter_gradients(
              [&] { return loss::gradient_penalty(critic, real, fake, 10.0, {0.4, 0.9}); }, w) <=
          1e-4);

    Rng rng(19);
    nn::NetworkSpec spec = nn::NetworkSpec::default_critic();
    spec.critic_layers = {{4, 2}, {4, 2}};
    const nn::Critic net(spec, DType::f64, rng);
    const auto fn = [&](const Tensor& x) { return net.forward(x); };
    for (auto& p : net.parameters()) {
      CAPTURE(p.name);
      Tensor param = p.tensor;
      CHECK(check_parameter_gradients(
                [&] { return loss::gradient_penalty(fn, real, fake, 10.0, {0.4, 0.9}); }, param) <=
            1e-4);
    }
  }

  TEST_CASE("critic and adversarial losses") {
    const Tensor real = Tensor::from({2}, {3, 5});
    const Tensor fake = Tensor::from({2}, {1, -1});
    CHECK(loss::adversarial_loss(fake).item() == 0.0);
    CHECK(loss::critic_loss(real, fake, {}).item() == -4.0);
    CHECK(loss::critic_loss(real, fake, Tensor::scalar(1.5)).item() == -2.5);
  }

  TEST_CASE("generator loss equals the hand-composed sum") {
    const Tensor sr = test::random_tensor({2, 3, 8, 8}, 20, 0, 1);
    const Tensor hr = test::random_tensor({2, 3, 8, 8}, 21, 0, 1);
    const Tensor scores = Tensor::from({2}, {0.7, -2.0});
    loss::LossConfig config;
    const auto l = loss::generator_loss(sr, hr, scores, config);
    const double expected = oracle::mse(sr, hr) + config.lambda * (-(0.7 - 2.0) / 2) +
                            config.mu * (1.0 - oracle::gradient_cosine(sr, hr));
    CHECK(l.total.item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(l.adversarial.item() == doctest::Approx(0.65));
  }

  TEST_CASE("full generator loss through a 2-block generator passes finite differences") {
    Rng rng(22);
    nn::NetworkSpec gspec = nn::NetworkSpec::default_generator();
    gspec.width = 4;
    gspec.blocks = 2;
    gspec.head_kernel = 3;
    gspec.tail_kernel = 3;
    const nn::Generator g(gspec, DType::f64, rng);
    nn::NetworkSpec cspec = nn::NetworkSpec::default_critic();
    cspec.critic_layers = {{4, 2}};
    const nn::Critic critic(cspec, DType::f64, rng);
    const Tensor lr = test::random_tensor({1, 3, 3, 3}, 23, 0, 1);
    const Tensor hr = test::random_tensor({1, 3, 12, 12}, 24, 0, 1);
    loss::LossConfig config;
    config.lambda = 0.5;
    config.mu = 0.5;
    const auto total = [&](const Tensor& x) {
      const Tensor sr = g.forward(x);
      return loss::generator_loss(sr, hr, critic.forward(sr), config).total;
    };
    CHECK(check_gradients(total, lr) <= 1e-4);
    for (auto& p : g.parameters()) {
      CAPTURE(p.name);
      Tensor param = p.tensor;
      CHECK(check_parameter_gradients([&] { return total(lr); }, param) <= 1e-4);
    }
  }

  TEST_CASE("loss inputs are validated") {
    CHECK_THROWS_AS(loss::gradient_cosine_loss(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 4, 4})),
                    ShapeError);
    CHECK_THROWS_AS(loss::content_loss(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 3, 4, 5})),
                    ShapeError);
    CHECK_THROWS(loss::parse_stabilizer("spectral"));
    CHECK(loss::parse_stabilizer("off") == loss::Stabilizer::off);
    loss::LossConfig bad;
    bad.mu = -1;
    CHECK_THROWS(bad.validate());
  }
}
