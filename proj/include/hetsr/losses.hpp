#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hetsr/random.hpp"
#include "hetsr/tensor.hpp"

namespace hetsr::loss {

// Per-channel Sobel responses of an [N, C, H, W] image, replicate-padded so
// each component has the image's shape. G_x differentiates along the width.
struct GradientField {
  Tensor gx;
  Tensor gy;
};

GradientField spatial_gradient(const Tensor& image);

// Flattened gradient vector per image, [N, C*2*H*W]: for each channel its
// G_x plane followed by its G_y plane.
Tensor packed_gradients(const Tensor& image);

// Below this norm a gradient vector counts as zero: two zero vectors have
// similarity 1, a zero and a non-zero vector have similarity 0.
inline constexpr double kZeroNorm = 1e-12;

// dot(x, y) / (|x| |y|) over all elements; x and y need equal element counts.
Tensor cosine_similarity(const Tensor& x, const Tensor& y);
// Row-wise cosine similarity of [N, m] matrices, giving [N].
Tensor row_cosine_similarity(const Tensor& x, const Tensor& y);

// F_cos between the flattened gradient fields of the super-resolved and the
// reference RGB images, averaged over the batch. Equals 1 for identical
// (non-constant) images.
Tensor gradient_cosine_loss(const Tensor& sr, const Tensor& hr);

// Pixel mean squared error.
Tensor content_loss(const Tensor& sr, const Tensor& hr);

// -mean(fake_scores).
Tensor adversarial_loss(const Tensor& fake_scores);

// mean(fake) - mean(real) + penalty; pass an undefined penalty for none.
Tensor critic_loss(const Tensor& real_scores, const Tensor& fake_scores, const Tensor& penalty);

using CriticFn = std::function<Tensor(const Tensor&)>;

// coefficient * mean over interpolates x = e*real + (1-e)*fake of
// (|grad_x critic(x)|_2 - 1)^2, with one e per sample. The result is
// differentiable with respect to the critic's parameters.
Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        double coefficient, const std::vector<double>& epsilon);
// Draws e ~ U(0, 1) per sample from `rng`.
Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        double coefficient, Rng& rng);

enum class ContentLoss { mse };
enum class Stabilizer { off, gradient_penalty, weight_clipping };

std::string stabilizer_name(Stabilizer s);
Stabilizer parse_stabilizer(const std::string& name);

struct LossConfig {
  double lambda = 0.001;  // adversarial weight
  double mu = 0.001;      // gradient-cosine weight
  ContentLoss content = ContentLoss::mse;
  Stabilizer stabilizer = Stabilizer::gradient_penalty;
  double penalty_coefficient = 10.0;
  double clip_bound = 0.01;

  void validate() const;
};

struct GeneratorLoss {
  Tensor total;
  Tensor content;
  Tensor adversarial;
  Tensor fcos;
};

// content + lambda * adversarial + mu * (1 - F_cos).
GeneratorLoss generator_loss(const Tensor& sr, const Tensor& hr, const Tensor& fake_scores,
                             const LossConfig& config);

}  // namespace hetsr::loss
