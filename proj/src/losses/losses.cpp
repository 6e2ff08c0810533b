#include "hetsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hetsr/autograd.hpp"
#include "hetsr/ops.hpp"

namespace hetsr::loss {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

Tensor sobel_kernels(DType dtype) {
  return Tensor::from({2, 1, 3, 3},
                      {-1, 0, 1, -2, 0, 2, -1, 0, 1,    // G_x
                       -1, -2, -1, 0, 0, 0, 1, 2, 1},   // G_y
                      dtype);
}

}  // namespace

Tensor packed_gradients(const Tensor& image) {
  if (image.ndim() != 4) {
    throw ShapeError("spatial_gradient: expected [N,C,H,W], got " + shape_str(image.shape()));
  }
  const auto n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (h < 3 || w < 3) {
    throw ShapeError("spatial_gradient: image " + shape_str(image.shape()) +
                     " is smaller than 3x3");
  }
  Tensor planes = pad_replicate(reshape(image, {n * c, 1, h, w}), 1);
  Tensor responses = conv2d(planes, sobel_kernels(image.dtype()));
  return reshape(responses, {n, c * 2 * h * w});
}

GradientField spatial_gradient(const Tensor& image) {
  Tensor packed = packed_gradients(image);
  const auto n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  Tensor per_plane = reshape(packed, {n * c, 2, h, w});
  return {reshape(index_select(per_plane, 1, {0}), image.shape()),
          reshape(index_select(per_plane, 1, {1}), image.shape())};
}

Tensor row_cosine_similarity(const Tensor& x, const Tensor& y) {
  if (x.ndim() != 2) {
    throw ShapeError("row_cosine_similarity: expected [N, m], got " + shape_str(x.shape()));
  }
  require_same_shape(x, y, "row_cosine_similarity");
  const auto n = x.dim(0);
  const Shape rows{n, 1};
  Tensor dot = sum_to(mul(x, y), rows);
  Tensor xx = sum_to(square(x), rows);
  Tensor yy = sum_to(square(y), rows);

  // Rows with a vanishing vector take a constant value; their denominator is
  // replaced by 1 so no division by zero enters the graph.
  std::vector<double> guard(static_cast<std::size_t>(n)), keep(guard.size()), both(guard.size());
  const auto xv = xx.to_vector();
  const auto yv = yy.to_vector();
  for (std::size_t i = 0; i < guard.size(); ++i) {
    const bool x_zero = std::sqrt(xv[i]) < kZeroNorm;
    const bool y_zero = std::sqrt(yv[i]) < kZeroNorm;
    guard[i] = (x_zero || y_zero) ? 1.0 : 0.0;
    keep[i] = 1.0 - guard[i];
    both[i] = (x_zero && y_zero) ? 1.0 : 0.0;
  }
  const Tensor guard_t = Tensor::from(rows, guard, x.dtype());
  // One square root of the product: for x == y this is exactly xx, so the
  // ratio is exactly 1.
  Tensor denom = sqrt(mul(add(xx, guard_t), add(yy, guard_t)));
  Tensor cos = add(mul(div(dot, denom), Tensor::from(rows, keep, x.dtype())),
                   Tensor::from(rows, both, x.dtype()));
  // Rounding can leave |cos| an ulp above 1; shift it back with a constant
  // so the gradient is untouched.
  auto shift = cos.to_vector();
  for (double& v : shift) v = std::clamp(v, -1.0, 1.0) - v;
  return reshape(add(cos, Tensor::from(rows, shift, x.dtype())), {n});
}

Tensor cosine_similarity(const Tensor& x, const Tensor& y) {
  if (x.numel() != y.numel()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(x.numel()) + " and " +
                     std::to_string(y.numel()) + " differ");
  }
  if (x.numel() == 0) {
    throw ShapeError("cosine_similarity: empty vectors");
  }
  return reshape(row_cosine_similarity(reshape(x, {1, x.numel()}), reshape(y, {1, y.numel()})),
                 {});
}

Tensor gradient_cosine_loss(const Tensor& sr, const Tensor& hr) {
  require_same_shape(sr, hr, "gradient_cosine_loss");
  if (sr.ndim() != 4 || sr.dim(1) != 3) {
    throw ShapeError("gradient_cosine_loss: expected RGB batches [N,3,H,W], got " +
                     shape_str(sr.shape()));
  }
  return mean(row_cosine_similarity(packed_gradients(sr), packed_gradients(hr)));
}

Tensor content_loss(const Tensor& sr, const Tensor& hr) {
  require_same_shape(sr, hr, "content_loss");
  return mean(square(sub(sr, hr)));
}

Tensor adversarial_loss(const Tensor& fake_scores) {
  if (fake_scores.numel() == 0) {
    throw ShapeError("adversarial_loss: empty batch");
  }
  return neg(mean(fake_scores));
}

Tensor critic_loss(const Tensor& real_scores, const Tensor& fake_scores, const Tensor& penalty) {
  if (real_scores.numel() == 0 || fake_scores.numel() == 0) {
    throw ShapeError("critic_loss: empty batch");
  }
  Tensor loss = sub(mean(fake_scores), mean(real_scores));
  return penalty.defined() ? add(loss, reshape(penalty, {})) : loss;
}

Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        double coefficient, const std::vector<double>& epsilon) {
  require_same_shape(real, fake, "gradient_penalty");
  if (coefficient < 0) {
    throw std::invalid_argument("gradient_penalty: coefficient must be non-negative");
  }
  if (coefficient == 0.0) {
    return Tensor::scalar(0.0, real.dtype());
  }
  const auto n = real.dim(0);
  if (static_cast<std::int64_t>(epsilon.size()) != n) {
    throw ShapeError("gradient_penalty: need one interpolation weight per sample");
  }
  Shape per_sample(static_cast<std::size_t>(real.ndim()), 1);
  per_sample[0] = n;
  const Tensor e = Tensor::from(per_sample, epsilon, real.dtype());

  GradModeGuard recording(true);
  Tensor mixed;
  {
    NoGradGuard no_grad;
    mixed = add(mul(e, real), mul(add_scalar(neg(e), 1.0), fake));
  }
  mixed.set_requires_grad(true);
  Tensor scores = critic(mixed);
  Tensor g = grad(sum(scores), {mixed}, /*create_graph=*/true)[0];
  Tensor sq = sum_to(reshape(square(g), {n, real.numel() / n}), {n, 1});
  Tensor norms = sqrt(add_scalar(sq, 1e-12));
  return mul_scalar(mean(square(add_scalar(norms, -1.0))), coefficient);
}

Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        double coefficient, Rng& rng) {
  std::vector<double> epsilon(static_cast<std::size_t>(real.dim(0)));
  for (auto& e : epsilon) e = rng.uniform();
  return gradient_penalty(critic, real, fake, coefficient, epsilon);
}

std::string stabilizer_name(Stabilizer s) {
  switch (s) {
    case Stabilizer::off:
      return "off";
    case Stabilizer::gradient_penalty:
      return "gradient_penalty";
    case Stabilizer::weight_clipping:
      return "weight_clipping";
  }
  return "off";
}

Stabilizer parse_stabilizer(const std::string& name) {
  if (name == "off" || name == "none") return Stabilizer::off;
  if (name == "gradient_penalty" || name == "gp") return Stabilizer::gradient_penalty;
  if (name == "weight_clipping" || name == "clip") return Stabilizer::weight_clipping;
  throw std::invalid_argument("unknown stabilizer '" + name + "'");
}

void LossConfig::validate() const {
  if (!(lambda >= 0) || !(mu >= 0)) {
    throw std::invalid_argument("LossConfig: lambda and mu must be non-negative");
  }
  if (!(penalty_coefficient >= 0)) {
    throw std::invalid_argument("LossConfig: penalty coefficient must be non-negative");
  }
  if (!(clip_bound > 0)) {
    throw std::invalid_argument("LossConfig: clip bound must be positive");
  }
}

GeneratorLoss generator_loss(const Tensor& sr, const Tensor& hr, const Tensor& fake_scores,
                             const LossConfig& config) {
  GeneratorLoss out;
  out.content = content_loss(sr, hr);
  out.adversarial = adversarial_loss(fake_scores);
  out.fcos = gradient_cosine_loss(sr, hr);
  out.total = add(add(out.content, mul_scalar(out.adversarial, config.lambda)),
                  mul_scalar(add_scalar(neg(out.fcos), 1.0), config.mu));
  return out;
}

}  // namespace hetsr::loss
