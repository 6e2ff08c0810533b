#include "hetsr/cost.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hetsr::nn {

double het_conv_reduction(std::int64_t kernel, std::int64_t part) {
  if (kernel < 1 || part < 1) {
    throw std::invalid_argument("het_conv_reduction: kernel and part must be positive");
  }
  const double p = static_cast<double>(part);
  const double k2 = static_cast<double>(kernel * kernel);
  return 1.0 / p + (1.0 - 1.0 / p) / k2;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

LayerCost conv_cost(const std::string& name, const HetConv2d& conv, std::int64_t batch,
                    std::int64_t out_h, std::int64_t out_w) {
  LayerCost c;
  c.name = name;
  c.kind = "conv";
  c.in_channels = conv.in_channels();
  c.out_channels = conv.out_channels();
  c.kernel = conv.kernel();
  c.part = conv.part();
  c.weights = conv.kxk_weight().numel() + conv.pointwise_weight().numel();
  c.standard_weights = conv.standard_weight_count();
  c.bias = conv.bias().numel();
  // Every weight fires once per output pixel.
  c.macs = batch * out_h * out_w * c.weights;
  c.standard_macs = batch * out_h * out_w * c.standard_weights;
  return c;
}

CostReport finish(std::vector<LayerCost> layers, const ParameterList& params, Shape input) {
  CostReport r;
  r.layers = std::move(layers);
  r.input_shape = std::move(input);
  for (const auto& p : params) r.total_params += p.tensor.numel();
  for (const auto& l : r.layers) {
    if (l.kind == "conv") {
      r.conv_weights += l.weights;
      r.standard_conv_weights += l.standard_weights;
    }
    r.macs += l.macs;
    r.standard_macs += l.standard_macs;
  }
  r.standard_total_params = r.total_params - r.conv_weights + r.standard_conv_weights;
  return r;
}

void require_image_shape(const Shape& s, std::int64_t channels) {
  if (s.size() != 4 || s[1] != channels) {
    throw ShapeError("count_flops: expected input [N," + std::to_string(channels) +
                     ",H,W], got " + shape_str(s));
  }
}

std::vector<LayerCost> generator_costs(const Generator& net, std::int64_t batch, std::int64_t h,
                                       std::int64_t w) {
  std::vector<LayerCost> out;
  std::size_t stage = 0;
  for (const auto& [name, conv] : net.conv_layers()) {
    out.push_back(conv_cost(name, *conv, batch, h, w));
    if (name.rfind("upsample.", 0) == 0) {
      const auto r = net.spec().upscale.at(stage++);
      h *= r;
      w *= r;
    }
  }
  return out;
}

std::vector<LayerCost> critic_costs(const Critic& net, std::int64_t batch, std::int64_t h,
                                    std::int64_t w) {
  std::vector<LayerCost> out;
  for (const auto& [name, conv] : net.conv_layers()) {
    if (batch > 0) {
      h = conv->output_extent(h);
      w = conv->output_extent(w);
    }
    out.push_back(conv_cost(name, *conv, batch, h, w));
  }
  LayerCost head;
  head.name = "head";
  head.kind = "linear";
  head.in_channels = net.head_weight().dim(0);
  head.out_channels = 1;
  head.weights = head.standard_weights = net.head_weight().numel();
  head.macs = head.standard_macs = batch * head.weights;
  out.push_back(head);
  return out;
}

}  // namespace

double LayerCost::weight_ratio() const { return ratio(weights, standard_weights); }
double LayerCost::mac_ratio() const { return ratio(macs, standard_macs); }

double CostReport::conv_weight_ratio() const { return ratio(conv_weights, standard_conv_weights); }
double CostReport::param_ratio() const { return ratio(total_params, standard_total_params); }
double CostReport::mac_ratio() const { return ratio(macs, standard_macs); }

CostReport count_parameters(const Generator& net) {
  return finish(generator_costs(net, 0, 0, 0), net.parameters(), {});
}

CostReport count_parameters(const Critic& net) {
  return finish(critic_costs(net, 0, 0, 0), net.parameters(), {});
}

CostReport count_flops(const Generator& net, const Shape& input_shape) {
  require_image_shape(input_shape, net.spec().in_channels);
  return finish(generator_costs(net, input_shape[0], input_shape[2], input_shape[3]),
                net.parameters(), input_shape);
}

CostReport count_flops(const Critic& net, const Shape& input_shape) {
  require_image_shape(input_shape, net.spec().in_channels);
  return finish(critic_costs(net, input_shape[0], input_shape[2], input_shape[3]),
                net.parameters(), input_shape);
}

std::string format_report(const CostReport& r) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %5s %5s %3s %3s %10s %10s %8s %14s %14s %8s\n", "layer",
                "in", "out", "k", "P", "weights", "standard", "ratio", "macs", "std_macs",
                "ratio");
  out << line;
  for (const auto& l : r.layers) {
    std::snprintf(line, sizeof line,
                  "%-22s %5lld %5lld %3lld %3lld %10lld %10lld %8.6f %14lld %14lld %8.6f\n",
                  l.name.c_str(), static_cast<long long>(l.in_channels),
                  static_cast<long long>(l.out_channels), static_cast<long long>(l.kernel),
                  static_cast<long long>(l.part), static_cast<long long>(l.weights),
                  static_cast<long long>(l.standard_weights), l.weight_ratio(),
                  static_cast<long long>(l.macs), static_cast<long long>(l.standard_macs),
                  l.mac_ratio());
    out << line;
  }
  std::snprintf(line, sizeof line, "conv weights: %lld vs %lld standard (ratio %.6f)\n",
                static_cast<long long>(r.conv_weights),
                static_cast<long long>(r.standard_conv_weights), r.conv_weight_ratio());
  out << line;
  std::snprintf(line, sizeof line, "parameters:   %lld vs %lld standard (ratio %.6f)\n",
                static_cast<long long>(r.total_params),
                static_cast<long long>(r.standard_total_params), r.param_ratio());
  out << line;
  if (!r.input_shape.empty()) {
    std::snprintf(line, sizeof line, "MACs at %s: %lld vs %lld standard (ratio %.6f)\n",
                  shape_str(r.input_shape).c_str(), static_cast<long long>(r.macs),
                  static_cast<long long>(r.standard_macs), r.mac_ratio());
    out << line;
  }
  return out.str();
}

}  // namespace hetsr::nn
