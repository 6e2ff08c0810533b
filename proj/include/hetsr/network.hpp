#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetsr/layers.hpp"

namespace hetsr::nn {

enum class Role { generator, critic };

std::string role_name(Role role);
Role parse_role(const std::string& name);

struct CriticLayerSpec {
  std::int64_t channels = 64;
  std::int64_t stride = 1;
};

// Declarative description of a generator or a critic.
struct NetworkSpec {
  Role role = Role::generator;
  std::int64_t in_channels = 3;

  // Generator: head conv -> residual blocks -> post conv (+ long skip from the
  // head) -> upsampling stages (conv, pixel shuffle, activation) -> tail conv.
  std::int64_t out_channels = 3;
  std::int64_t width = 64;
  std::int64_t blocks = 16;
  std::int64_t head_kernel = 9;
  std::int64_t block_kernel = 3;
  std::int64_t block_part = 4;
  std::int64_t post_kernel = 3;
  std::int64_t post_part = 4;
  std::vector<std::int64_t> upscale = {2, 2};
  std::int64_t upsample_kernel = 3;
  std::int64_t upsample_part = 1;
  std::int64_t tail_kernel = 9;
  Activation activation = Activation::prelu;
  // Initial weight scale of the second conv in each residual block.
  double residual_init_scale = 1.0;
  // Adds the bicubic upscale of the input to the output, so the network
  // learns a correction to the interpolation.
  bool bicubic_skip = false;
  // Initial weight scale of the output conv.
  double tail_init_scale = 1.0;

  // Critic: conv stack with leaky activations, global average pool, and a
  // bias-free linear head producing one unbounded score per sample.
  std::vector<CriticLayerSpec> critic_layers = {{64, 1},  {64, 2},  {128, 1}, {128, 2},
                                                {256, 1}, {256, 2}, {512, 1}, {512, 2}};
  std::int64_t critic_kernel = 3;
  std::int64_t critic_part = 1;
  double leaky_slope = 0.2;

  static NetworkSpec default_generator();
  static NetworkSpec default_critic();

  // Same topology with every HetConv replaced by a standard convolution.
  NetworkSpec standard_twin() const;
  std::int64_t scale_factor() const;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

class Generator {
 public:
  Generator(const NetworkSpec& spec, DType dtype, Rng& rng);

  // [N, C, H, W] -> [N, out_channels, 4H, 4W]; the output is linear (unclamped).
  Tensor forward(const Tensor& lr) const;

  const NetworkSpec& spec() const { return spec_; }
  DType dtype() const { return dtype_; }
  ParameterList parameters() const;
  std::vector<LayerInfo> describe() const;
  // Every convolution with its name, in forward order.
  std::vector<std::pair<std::string, const HetConv2d*>> conv_layers() const;
  std::vector<HetResidualBlock>& blocks() { return blocks_; }
  // Deep copy with independent parameter storage.
  Generator clone() const;

 private:
  struct UpsampleStage {
    HetConv2d conv;
    std::int64_t factor = 2;
    ActivationLayer act;
  };

  NetworkSpec spec_;
  DType dtype_;
  HetConv2d head_;
  ActivationLayer head_act_;
  std::vector<HetResidualBlock> blocks_;
  HetConv2d post_;
  std::vector<UpsampleStage> stages_;
  HetConv2d tail_;
};

class Critic {
 public:
  Critic(const NetworkSpec& spec, DType dtype, Rng& rng);

  // [N, C, H, W] -> [N] unbounded scores.
  Tensor forward(const Tensor& x) const;

  const NetworkSpec& spec() const { return spec_; }
  DType dtype() const { return dtype_; }
  ParameterList parameters() const;
  std::vector<LayerInfo> describe() const;
  std::vector<std::pair<std::string, const HetConv2d*>> conv_layers() const;
  // Weight of the linear head, [channels, 1].
  Tensor& head_weight() { return head_; }
  const Tensor& head_weight() const { return head_; }
  Critic clone() const;

 private:
  NetworkSpec spec_;
  DType dtype_;
  std::vector<HetConv2d> convs_;
  std::vector<ActivationLayer> acts_;
  Tensor head_;
};

// Copies values from `source` into `target` parameter-by-parameter (by name).
void copy_parameters(const ParameterList& source, const ParameterList& target);

}  // namespace hetsr::nn
