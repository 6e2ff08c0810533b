#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetsr/random.hpp"
#include "hetsr/tensor.hpp"

namespace hetsr::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

enum class Activation { none, relu, leaky_relu, prelu };

std::string activation_name(Activation activation);
Activation parse_activation(const std::string& name);

// Structural record of one layer, used for introspection and cost reports.
struct LayerInfo {
  std::string name;
  std::string kind;  // hetconv, prelu, leaky_relu, relu, pixel_shuffle, residual_add, ...
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 0;
  std::int64_t part = 0;
  std::int64_t stride = 0;
};

// Convolution whose filters mix K x K and 1 x 1 kernels. Filter f applies
// K x K kernels to the input channels c with c % P == f % P and 1 x 1
// kernels to every other channel, so each filter holds (M/P)*K*K + (M - M/P)
// weights. P = 1 is an ordinary K x K convolution. Padding is (K-1)/2 so the
// two kernel kinds stay centred on the same input pixel. Strided layers give
// floor((H - 1) / stride) + 1 outputs per axis.
class HetConv2d {
 public:
  HetConv2d() = default;
  HetConv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
            std::int64_t part, std::int64_t stride, DType dtype, Rng& rng,
            double init_scale = 1.0);

  Tensor forward(const Tensor& x) const;

  std::int64_t in_channels() const { return in_; }
  std::int64_t out_channels() const { return out_; }
  std::int64_t kernel() const { return kernel_; }
  std::int64_t part() const { return part_; }
  std::int64_t stride() const { return stride_; }
  std::int64_t padding() const { return (kernel_ - 1) / 2; }

  // [F, M/P, K, K]: entry j of filter f belongs to input channel f % P + j * P.
  Tensor& kxk_weight() { return kxk_; }
  const Tensor& kxk_weight() const { return kxk_; }
  // [F, M - M/P]: the remaining channels of filter f in increasing order.
  Tensor& pointwise_weight() { return pointwise_; }
  const Tensor& pointwise_weight() const { return pointwise_; }
  Tensor& bias() { return bias_; }
  const Tensor& bias() const { return bias_; }

  std::vector<std::int64_t> kxk_channels(std::int64_t filter) const;
  std::vector<std::int64_t> pointwise_channels(std::int64_t filter) const;

  // The equivalent standard-convolution weight [F, M, K, K].
  Tensor dense_weight() const;

  std::int64_t weight_count() const;
  std::int64_t standard_weight_count() const { return out_ * in_ * kernel_ * kernel_; }
  std::int64_t output_extent(std::int64_t in) const;

  void append_parameters(const std::string& prefix, ParameterList& out) const;
  LayerInfo info(const std::string& name) const;

 private:
  std::int64_t in_ = 0, out_ = 0, kernel_ = 1, part_ = 1, stride_ = 1;
  Tensor kxk_, pointwise_, bias_;
  // Filters sharing a residue class share their channel assignment.
  std::vector<std::vector<std::int64_t>> group_filters_;
  std::vector<std::vector<std::int64_t>> group_kxk_channels_;
  std::vector<std::vector<std::int64_t>> group_pointwise_channels_;
};

class ActivationLayer {
 public:
  ActivationLayer() = default;
  ActivationLayer(Activation kind, double slope, DType dtype);

  Tensor forward(const Tensor& x) const;
  Activation kind() const { return kind_; }
  // The learnable slope of a PReLU (undefined for other kinds).
  Tensor& slope() { return slope_param_; }
  const Tensor& slope() const { return slope_param_; }

  void append_parameters(const std::string& prefix, ParameterList& out) const;
  LayerInfo info(const std::string& name) const;

 private:
  Activation kind_ = Activation::none;
  double slope_ = 0.0;
  Tensor slope_param_;
};

// x + conv2(act(conv1(x))) with shape-preserving HetConv layers.
class HetResidualBlock {
 public:
  HetResidualBlock() = default;
  HetResidualBlock(std::int64_t channels, std::int64_t kernel, std::int64_t part,
                   Activation activation, DType dtype, Rng& rng, double residual_init_scale = 1.0);

  Tensor forward(const Tensor& x) const;

  HetConv2d& conv1() { return conv1_; }
  HetConv2d& conv2() { return conv2_; }
  const HetConv2d& conv1() const { return conv1_; }
  const HetConv2d& conv2() const { return conv2_; }
  ActivationLayer& activation() { return act_; }

  void append_parameters(const std::string& prefix, ParameterList& out) const;
  void append_info(const std::string& prefix, std::vector<LayerInfo>& out) const;

 private:
  HetConv2d conv1_;
  ActivationLayer act_;
  HetConv2d conv2_;
};

}  // namespace hetsr::nn
