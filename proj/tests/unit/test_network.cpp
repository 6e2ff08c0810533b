#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hetsr/autograd.hpp"
#include "hetsr/cost.hpp"
#include "hetsr/network.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/resample.hpp"
#include "support.hpp"

using namespace hetsr;
using nn::NetworkSpec;

namespace {

NetworkSpec small_generator() {
  NetworkSpec s = NetworkSpec::default_generator();
  s.width = 8;
  s.blocks = 2;
  return s;
}

NetworkSpec small_critic() {
  NetworkSpec s = NetworkSpec::default_critic();
  s.critic_layers = {{8, 2}, {16, 2}};
  return s;
}

bool all_finite(const Tensor& t) {
  for (double v : t.to_vector())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("generator upscales by four for any extent") {
    Rng rng(1);
    const nn::Generator g(small_generator(), DType::f64, rng);
    for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{24, 24}, {5, 7}, {1, 3}}) {
      const Tensor out = g.forward(test::random_tensor({2, 3, h, w}, 2, 0, 1));
      CHECK(out.shape() == Shape{2, 3, 4 * h, 4 * w});
      CHECK(all_finite(out));
    }
  }

  TEST_CASE("default generator keeps at most 48% of standard conv weights") {
    Rng rng(0);
    const nn::Generator g(NetworkSpec::default_generator(), DType::f32, rng);
    const nn::Generator twin(NetworkSpec::default_generator().standard_twin(), DType::f32, rng);
    const auto report = nn::count_parameters(g);
    const auto twin_report = nn::count_parameters(twin);
    CHECK(report.standard_conv_weights == twin_report.conv_weights);
    CHECK(report.conv_weight_ratio() <= 0.48);
    CHECK(report.conv_weight_ratio() == doctest::Approx(0.474235).epsilon(1e-5));
    CHECK(twin_report.conv_weight_ratio() == 1.0);

    // Every K = 3, P = 4 layer hits the closed-form fraction exactly.
    const auto flops = nn::count_flops(g, {1, 3, 24, 24});
    for (const auto& layer : flops.layers) {
      if (layer.kernel == 3 && layer.part == 4) {
        CHECK(std::abs(layer.weight_ratio() - nn::het_conv_reduction(3, 4)) <= 1e-12);
        CHECK(std::abs(layer.mac_ratio() - nn::het_conv_reduction(3, 4)) <= 1e-12);
      }
    }
  }

  TEST_CASE("conv layers of the generator follow the declared topology") {
    Rng rng(0);
    const auto spec = small_generator();
    const nn::Generator g(spec, DType::f64, rng);
    const auto convs = g.conv_layers();
    // head, two per block, post, one per upsampling stage, tail
    REQUIRE(convs.size() == static_cast<std::size_t>(1 + 2 * spec.blocks + 1 + 2 + 1));
    CHECK(convs.front().second->kernel() == 9);
    CHECK(convs.back().second->kernel() == 9);
    CHECK(convs.back().second->out_channels() == 3);
    CHECK(convs[1].second->part() == 4);
    CHECK(convs[1 + 2 * spec.blocks].second->part() == spec.post_part);
  }

  TEST_CASE("critic has no normalisation and no sigmoid") {
    Rng rng(0);
    const nn::Critic c(NetworkSpec::default_critic(), DType::f32, rng);
    for (const auto& info : c.describe()) {
      CAPTURE(info.name);
      CHECK(info.kind != "batch_norm");
      CHECK(info.kind != "sigmoid");
    }
    for (const auto& p : c.parameters()) {
      CHECK(p.name.find("norm") == std::string::npos);
    }
  }

  TEST_CASE("critic returns one unbounded score per sample") {
    Rng rng(3);
    const nn::Critic c(small_critic(), DType::f64, rng);
    const Tensor scores = c.forward(test::random_tensor({3, 3, 16, 16}, 4, 0, 1));
    CHECK(scores.shape() == Shape{3});
    nn::Critic scaled = c.clone();
    scaled.head_weight().assign(mul_scalar(c.head_weight(), 1e4));
    const auto big = scaled.forward(test::random_tensor({3, 3, 16, 16}, 4, 0, 1)).to_vector();
    const auto base = scores.to_vector();
    for (std::size_t i = 0; i < 3; ++i) CHECK(big[i] == doctest::Approx(base[i] * 1e4));
  }

  TEST_CASE("critic gradients match finite differences") {
    Rng rng(5);
    const nn::Critic c(small_critic(), DType::f64, rng);
    const Tensor x = test::random_tensor({2, 3, 8, 8}, 6, 0, 1);
    CHECK(check_gradients([&](const Tensor& t) { return sum(c.forward(t)); }, x) <= 1e-5);
    for (auto& p : c.parameters()) {
      CAPTURE(p.name);
      Tensor param = p.tensor;
      CHECK(check_parameter_gradients([&] { return sum(c.forward(x)); }, param) <= 1e-5);
    }
  }

  TEST_CASE("generator gradients match finite differences") {
    Rng rng(7);
    NetworkSpec spec = small_generator();
    spec.width = 4;
    spec.blocks = 1;
    spec.head_kernel = 3;
    spec.tail_kernel = 3;
    const nn::Generator g(spec, DType::f64, rng);
    const Tensor x = test::random_tensor({1, 3, 3, 3}, 8, 0, 1);
    const Tensor probe = test::random_tensor({1, 3, 12, 12}, 9);
    const auto f = [&](const Tensor& t) { return sum(mul(g.forward(t), probe)); };
    CHECK(check_gradients(f, x) <= 1e-5);
    for (auto& p : g.parameters()) {
      CAPTURE(p.name);
      Tensor param = p.tensor;
      CHECK(check_parameter_gradients([&] { return f(x); }, param) <= 1e-5);
    }
  }

  TEST_CASE("bicubic skip with a zero tail reproduces bicubic upscaling") {
    Rng rng(9);
    NetworkSpec spec = small_generator();
    spec.bicubic_skip = true;
    spec.tail_init_scale = 0.0;
    const nn::Generator g(spec, DType::f64, rng);
    const Tensor lr = test::random_tensor({2, 3, 6, 6}, 10, 0, 1);
    CHECK(test::max_abs_diff(g.forward(lr), data::upscale_bicubic(lr)) <= 1e-15);
  }

  TEST_CASE("clone has independent storage") {
    Rng rng(11);
    const nn::Generator g(small_generator(), DType::f64, rng);
    nn::Generator copy = g.clone();
    copy.parameters().front().tensor.fill(0.0);
    CHECK(g.parameters().front().tensor.to_vector() !=
          copy.parameters().front().tensor.to_vector());
    nn::copy_parameters(g.parameters(), copy.parameters());
    const Tensor x = test::random_tensor({1, 3, 4, 4}, 12, 0, 1);
    CHECK(g.forward(x).to_vector() == copy.forward(x).to_vector());
  }

  TEST_CASE("invalid specs name the offending field") {
    const auto fails_on = [](NetworkSpec s, const std::string& field) {
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        return std::string(e.what()).find(field) != std::string::npos;
      }
      return false;
    };
    NetworkSpec s = NetworkSpec::default_generator();
    s.width = 30;
    CHECK(fails_on(s, "block_part=4 must divide 30"));
    s = NetworkSpec::default_generator();
    s.block_kernel = 4;
    CHECK(fails_on(s, "block_kernel"));
    s = NetworkSpec::default_generator();
    s.upscale = {3};
    CHECK(fails_on(s, "upscale"));
    s = NetworkSpec::default_generator();
    s.tail_init_scale = std::nan("");
    CHECK(fails_on(s, "init scales"));
    s = NetworkSpec::default_critic();
    s.critic_layers.clear();
    CHECK(fails_on(s, "at least one conv layer"));
    Rng rng(0);
    CHECK_THROWS_AS(nn::Generator(s, DType::f32, rng), std::invalid_argument);
  }

  TEST_CASE("standard twin replaces every part with 1") {
    const NetworkSpec twin = NetworkSpec::default_generator().standard_twin();
    CHECK(twin.block_part == 1);
    CHECK(twin.post_part == 1);
    CHECK(twin.upsample_part == 1);
    CHECK(twin.width == NetworkSpec::default_generator().width);
    CHECK(NetworkSpec::default_generator().scale_factor() == 4);
  }
}
