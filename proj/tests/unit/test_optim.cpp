#include <cmath>
#include <limits>

#include "doctest.h"
#include "hetsr/optim.hpp"
#include "support.hpp"

using namespace hetsr;
using namespace hetsr::train;

namespace {

nn::ParameterList single(double value) {
  Tensor p = Tensor::from({1}, {value});
  p.set_requires_grad(true);
  return {{"w", p}};
}

std::vector<Tensor> grad_of(double g) { return {Tensor::from({1}, {g})}; }

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("Adam matches hand-computed steps") {
    const auto params = single(1.0);
    Adam adam(params, {0.1, 0.9, 0.999, 1e-8});
    adam.step(grad_of(0.5));
    // Bias-corrected first step moves by lr * sign(g).
    CHECK(params[0].tensor.item() == doctest::Approx(0.9).epsilon(1e-7));
    const double w1 = params[0].tensor.item();

    adam.step(grad_of(-0.2));
    const double m = 0.9 * 0.05 + 0.1 * -0.2;
    const double v = 0.999 * 0.00025 + 0.001 * 0.04;
    const double expected =
        w1 - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    CHECK(params[0].tensor.item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(adam.step_count() == 2);
  }

  TEST_CASE("Adam reads accumulated gradients") {
    const auto params = single(2.0);
    Tensor p = params[0].tensor;
    p.set_grad(Tensor::from({1}, {-1.0}));
    Adam adam(params, {0.5});
    adam.step();
    CHECK(p.item() == doctest::Approx(2.5).epsilon(1e-7));
    adam.zero_grad();
    CHECK((!p.grad().defined() || p.grad().item() == 0.0));
  }

  TEST_CASE("ASGD averages the iterates") {
    const auto params = single(1.0);
    Asgd asgd(params, {0.1, 0.0, 0.75, 0});
    asgd.step(grad_of(1.0));
    CHECK(params[0].tensor.item() == doctest::Approx(0.9));
    CHECK(asgd.averages()[0].item() == doctest::Approx(0.9));
    asgd.step(grad_of(1.0));
    CHECK(params[0].tensor.item() == doctest::Approx(0.8));
    CHECK(asgd.averages()[0].item() == doctest::Approx(0.85));
    asgd.step(grad_of(-3.0));
    CHECK(params[0].tensor.item() == doctest::Approx(1.1));
    CHECK(asgd.averages()[0].item() == doctest::Approx((0.9 + 0.8 + 1.1) / 3));
  }

  TEST_CASE("ASGD averaging starts after the configured step") {
    const auto params = single(0.0);
    Asgd asgd(params, {1.0, 0.0, 0.75, 2});
    for (double g : {-1.0, -1.0, -1.0}) asgd.step(grad_of(g));
    // Iterates 1, 2, 3; the average has only seen the iterate after step 3.
    CHECK(asgd.averages()[0].item() == doctest::Approx(3.0));
    asgd.step(grad_of(-1.0));
    CHECK(asgd.averages()[0].item() == doctest::Approx(3.5));
  }

  TEST_CASE("ASGD step size decays") {
    const Asgd asgd(single(0.0), {0.1, 10.0, 0.75, 0});
    CHECK(asgd.step_size(0) == 0.1);
    CHECK(asgd.step_size(3) == doctest::Approx(0.1 / std::pow(4.0, 0.75)));
    CHECK(asgd.step_size(10) < asgd.step_size(3));
  }

  TEST_CASE("non-finite gradients leave everything untouched") {
    const auto params = single(1.0);
    Adam adam(params, {0.1});
    const auto r = adam.step(grad_of(std::numeric_limits<double>::quiet_NaN()));
    CHECK_FALSE(r.applied);
    CHECK(r.warning.find("non-finite") != std::string::npos);
    CHECK(params[0].tensor.item() == 1.0);
    CHECK(adam.step_count() == 0);
    for (const auto& s : adam.state_tensors()) CHECK(s.tensor.item() == 0.0);

    Asgd asgd(params, {0.1});
    CHECK_FALSE(asgd.step(grad_of(std::numeric_limits<double>::infinity())).applied);
    CHECK(params[0].tensor.item() == 1.0);
  }

  TEST_CASE("gradient lists must line up with the parameters") {
    Adam adam(single(1.0), {0.1});
    CHECK_THROWS_AS(adam.step(std::vector<Tensor>{}), std::invalid_argument);
    CHECK_THROWS_AS(adam.step({Tensor::zeros({2})}), ShapeError);
    CHECK_THROWS(Adam(single(1.0), {0.0}));
  }

  TEST_CASE("scalars round trip") {
    Adam adam(single(1.0), {0.1});
    adam.step(grad_of(1.0));
    Adam other(single(1.0), {0.1});
    other.load_scalars(adam.scalars());
    CHECK(other.step_count() == 1);
  }

  TEST_CASE("clipping bounds every parameter") {
    Tensor p = Tensor::from({3}, {-0.5, 0.001, 2.0});
    clip_parameters({{"p", p}}, 0.01);
    CHECK(p.to_vector() == std::vector<double>{-0.01, 0.001, 0.01});
  }
}
