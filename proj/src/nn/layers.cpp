#include "hetsr/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "hetsr/ops.hpp"

namespace hetsr::nn {

std::string activation_name(Activation activation) {
  switch (activation) {
    case Activation::none:
      return "none";
    case Activation::relu:
      return "relu";
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::prelu:
      return "prelu";
  }
  return "none";
}

Activation parse_activation(const std::string& name) {
  if (name == "none" || name == "linear") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "prelu") return Activation::prelu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

HetConv2d::HetConv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
                     std::int64_t part, std::int64_t stride, DType dtype, Rng& rng,
                     double init_scale)
    : in_(in_channels), out_(out_channels), kernel_(kernel), part_(part), stride_(stride) {
  if (in_ < 1 || out_ < 1) {
    throw std::invalid_argument("HetConv2d: channel counts must be positive");
  }
  if (kernel_ < 1 || kernel_ % 2 == 0) {
    throw std::invalid_argument("HetConv2d: kernel size must be odd and positive, got " +
                                std::to_string(kernel_));
  }
  if (part_ < 1 || in_ % part_ != 0) {
    throw std::invalid_argument("HetConv2d: part P=" + std::to_string(part_) +
                                " must be positive and divide the input channels M=" +
                                std::to_string(in_));
  }
  if (stride_ < 1) {
    throw std::invalid_argument("HetConv2d: stride must be >= 1");
  }
  const auto kxk_per_filter = in_ / part_;
  const auto pointwise_per_filter = in_ - kxk_per_filter;

  group_filters_.resize(static_cast<std::size_t>(part_));
  group_kxk_channels_.resize(static_cast<std::size_t>(part_));
  group_pointwise_channels_.resize(static_cast<std::size_t>(part_));
  for (std::int64_t f = 0; f < out_; ++f) group_filters_[f % part_].push_back(f);
  for (std::int64_t c = 0; c < in_; ++c) {
    for (std::int64_t g = 0; g < part_; ++g) {
      (c % part_ == g ? group_kxk_channels_ : group_pointwise_channels_)[g].push_back(c);
    }
  }

  // Uniform(+-1/sqrt(fan_in)) for weights and bias, fan_in being the number
  // of weights one filter actually holds.
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight_count() / out_));
  kxk_ = Tensor::uniform({out_, kxk_per_filter, kernel_, kernel_}, -bound * init_scale,
                         bound * init_scale, rng, dtype);
  pointwise_ = Tensor::uniform({out_, pointwise_per_filter}, -bound * init_scale,
                               bound * init_scale, rng, dtype);
  bias_ = Tensor::uniform({out_}, -bound * init_scale, bound * init_scale, rng, dtype);
  kxk_.set_requires_grad(true);
  pointwise_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

std::int64_t HetConv2d::weight_count() const {
  return out_ * ((in_ / part_) * kernel_ * kernel_ + (in_ - in_ / part_));
}

std::int64_t HetConv2d::output_extent(std::int64_t in) const {
  return conv_output_extent(in, kernel_, stride_, padding(), stride_ > 1);
}

std::vector<std::int64_t> HetConv2d::kxk_channels(std::int64_t filter) const {
  return group_kxk_channels_.at(static_cast<std::size_t>(filter % part_));
}

std::vector<std::int64_t> HetConv2d::pointwise_channels(std::int64_t filter) const {
  return group_pointwise_channels_.at(static_cast<std::size_t>(filter % part_));
}

Tensor HetConv2d::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != in_) {
    throw ShapeError("HetConv2d: expected input [N," + std::to_string(in_) + ",H,W], got " +
                     shape_str(x.shape()));
  }
  const Conv2dOptions kxk_opts{stride_, padding(), stride_ > 1};
  if (part_ == 1) {
    return conv2d(x, kxk_, bias_, kxk_opts);
  }
  const Conv2dOptions pointwise_opts{stride_, 0, stride_ > 1};
  const auto pointwise_per_filter = in_ - in_ / part_;
  Tensor out;
  for (std::size_t g = 0; g < group_filters_.size(); ++g) {
    const auto& filters = group_filters_[g];
    if (filters.empty()) continue;
    const auto fg = static_cast<std::int64_t>(filters.size());
    Tensor y = conv2d(index_select(x, 1, group_kxk_channels_[g]), index_select(kxk_, 0, filters),
                      {}, kxk_opts);
    Tensor wp = reshape(index_select(pointwise_, 0, filters), {fg, pointwise_per_filter, 1, 1});
    y = add(y, conv2d(index_select(x, 1, group_pointwise_channels_[g]), wp, {}, pointwise_opts));
    Tensor placed = index_add(y, 1, filters, out_);
    out = out.defined() ? add(out, placed) : placed;
  }
  return add_channel_bias(out, bias_);
}

Tensor HetConv2d::dense_weight() const {
  Tensor dense = Tensor::zeros({out_, in_, kernel_, kernel_}, kxk_.dtype());
  const auto kk = kernel_ * kernel_;
  const auto centre = (kernel_ / 2) * kernel_ + kernel_ / 2;
  const auto K = kxk_.to_vector();
  const auto Pw = pointwise_.to_vector();
  std::vector<double> d(static_cast<std::size_t>(dense.numel()), 0.0);
  const auto kxk_per_filter = in_ / part_;
  const auto pointwise_per_filter = in_ - kxk_per_filter;
  for (std::int64_t f = 0; f < out_; ++f) {
    const auto kc = kxk_channels(f);
    const auto pc = pointwise_channels(f);
    for (std::int64_t j = 0; j < kxk_per_filter; ++j)
      for (std::int64_t t = 0; t < kk; ++t)
        d[static_cast<std::size_t>((f * in_ + kc[j]) * kk + t)] =
            K[static_cast<std::size_t>((f * kxk_per_filter + j) * kk + t)];
    for (std::int64_t j = 0; j < pointwise_per_filter; ++j)
      d[static_cast<std::size_t>((f * in_ + pc[j]) * kk + centre)] =
          Pw[static_cast<std::size_t>(f * pointwise_per_filter + j)];
  }
  dense.assign(d);
  return dense;
}

void HetConv2d::append_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".kxk_weight", kxk_});
  if (pointwise_.numel() > 0) out.push_back({prefix + ".pointwise_weight", pointwise_});
  out.push_back({prefix + ".bias", bias_});
}

LayerInfo HetConv2d::info(const std::string& name) const {
  return {name, "hetconv", in_, out_, kernel_, part_, stride_};
}

ActivationLayer::ActivationLayer(Activation kind, double slope, DType dtype)
    : kind_(kind), slope_(slope) {
  if (kind_ == Activation::prelu) {
    slope_param_ = Tensor::full({1}, slope, dtype);
    slope_param_.set_requires_grad(true);
  }
}

Tensor ActivationLayer::forward(const Tensor& x) const {
  switch (kind_) {
    case Activation::none:
      return x;
    case Activation::relu:
      return relu(x);
    case Activation::leaky_relu:
      return leaky_relu(x, slope_);
    case Activation::prelu:
      return prelu(x, slope_param_);
  }
  return x;
}

void ActivationLayer::append_parameters(const std::string& prefix, ParameterList& out) const {
  if (kind_ == Activation::prelu) out.push_back({prefix + ".slope", slope_param_});
}

LayerInfo ActivationLayer::info(const std::string& name) const {
  LayerInfo li;
  li.name = name;
  li.kind = activation_name(kind_);
  return li;
}

HetResidualBlock::HetResidualBlock(std::int64_t channels, std::int64_t kernel, std::int64_t part,
                                   Activation activation, DType dtype, Rng& rng,
                                   double residual_init_scale)
    : conv1_(channels, channels, kernel, part, 1, dtype, rng),
      act_(activation, activation == Activation::prelu ? 0.25 : 0.2, dtype),
      conv2_(channels, channels, kernel, part, 1, dtype, rng, residual_init_scale) {}

Tensor HetResidualBlock::forward(const Tensor& x) const {
  return add(x, conv2_.forward(act_.forward(conv1_.forward(x))));
}

void HetResidualBlock::append_parameters(const std::string& prefix, ParameterList& out) const {
  conv1_.append_parameters(prefix + ".conv1", out);
  act_.append_parameters(prefix + ".act", out);
  conv2_.append_parameters(prefix + ".conv2", out);
}

void HetResidualBlock::append_info(const std::string& prefix, std::vector<LayerInfo>& out) const {
  out.push_back(conv1_.info(prefix + ".conv1"));
  out.push_back(act_.info(prefix + ".act"));
  out.push_back(conv2_.info(prefix + ".conv2"));
  LayerInfo skip;
  skip.name = prefix + ".skip";
  skip.kind = "residual_add";
  out.push_back(skip);
}

}  // namespace hetsr::nn
