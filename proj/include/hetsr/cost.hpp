#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetsr/network.hpp"

namespace hetsr::nn {

// Fraction of a standard K x K convolution's weights (and multiply-accumulates)
// kept by a HetConv with part P: 1/P + (1 - 1/P)/K^2.
double het_conv_reduction(std::int64_t kernel, std::int64_t part);

struct LayerCost {
  std::string name;
  std::string kind;  // "conv" or "linear"
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 0;
  std::int64_t part = 1;
  std::int64_t weights = 0;
  std::int64_t standard_weights = 0;
  std::int64_t bias = 0;
  // Multiply-accumulates for the whole batch; zero in parameter-only reports.
  std::int64_t macs = 0;
  std::int64_t standard_macs = 0;

  double weight_ratio() const;
  double mac_ratio() const;
};

struct CostReport {
  std::vector<LayerCost> layers;
  Shape input_shape;  // empty for parameter-only reports
  // Every trainable scalar, including biases, activation slopes and heads.
  std::int64_t total_params = 0;
  std::int64_t standard_total_params = 0;
  // Convolution weights only (bias excluded).
  std::int64_t conv_weights = 0;
  std::int64_t standard_conv_weights = 0;
  std::int64_t macs = 0;
  std::int64_t standard_macs = 0;

  double conv_weight_ratio() const;
  double param_ratio() const;
  double mac_ratio() const;
};

CostReport count_parameters(const Generator& net);
CostReport count_parameters(const Critic& net);
// `input_shape` is [N, C, H, W]; MACs cover every conv and linear op.
CostReport count_flops(const Generator& net, const Shape& input_shape);
CostReport count_flops(const Critic& net, const Shape& input_shape);

// Fixed-width text table of a report, one row per layer plus totals.
std::string format_report(const CostReport& report);

}  // namespace hetsr::nn
