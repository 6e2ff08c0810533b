#include "hetsr/network.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "hetsr/ops.hpp"
#include "hetsr/resample.hpp"

namespace hetsr::nn {

std::string role_name(Role role) { return role == Role::generator ? "generator" : "critic"; }

Role parse_role(const std::string& name) {
  if (name == "generator") return Role::generator;
  if (name == "critic") return Role::critic;
  throw std::invalid_argument("unknown network role '" + name + "'");
}

NetworkSpec NetworkSpec::default_generator() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::default_critic() {
  NetworkSpec spec;
  spec.role = Role::critic;
  return spec;
}

NetworkSpec NetworkSpec::standard_twin() const {
  NetworkSpec twin = *this;
  twin.block_part = 1;
  twin.post_part = 1;
  twin.upsample_part = 1;
  twin.critic_part = 1;
  return twin;
}

std::int64_t NetworkSpec::scale_factor() const {
  std::int64_t s = 1;
  for (auto r : upscale) s *= r;
  return s;
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument("NetworkSpec: " + message);
}

void require_kernel(std::int64_t k, const char* field) {
  require(k >= 1 && k % 2 == 1, std::string(field) + " must be odd and positive");
}

void require_part(std::int64_t part, std::int64_t channels, const char* field) {
  require(part >= 1 && channels % part == 0,
          std::string(field) + "=" + std::to_string(part) + " must divide " +
              std::to_string(channels) + " input channels");
}

}  // namespace

void NetworkSpec::validate() const {
  require(in_channels >= 1, "in_channels must be positive");
  if (role == Role::generator) {
    require(out_channels >= 1, "out_channels must be positive");
    require(width >= 1, "width must be positive");
    require(blocks >= 0, "blocks must be non-negative");
    require_kernel(head_kernel, "head_kernel");
    require_kernel(block_kernel, "block_kernel");
    require_kernel(post_kernel, "post_kernel");
    require_kernel(upsample_kernel, "upsample_kernel");
    require_kernel(tail_kernel, "tail_kernel");
    require_part(block_part, width, "block_part");
    require_part(post_part, width, "post_part");
    require_part(upsample_part, width, "upsample_part");
    for (auto r : upscale) require(r >= 2, "upscale factors must be >= 2");
    require(std::isfinite(residual_init_scale) && std::isfinite(tail_init_scale),
            "init scales must be finite");
    require(scale_factor() == 4, "upscale stages must multiply to 4, got " +
                                     std::to_string(scale_factor()));
  } else {
    require(!critic_layers.empty(), "critic needs at least one conv layer");
    require_kernel(critic_kernel, "critic_kernel");
    for (std::size_t i = 0; i < critic_layers.size(); ++i) {
      const auto& layer = critic_layers[i];
      require(layer.channels >= 1 && layer.stride >= 1, "critic layers need positive extents");
      if (i > 0) require_part(critic_part, critic_layers[i - 1].channels, "critic_part");
    }
    require(std::isfinite(leaky_slope), "leaky_slope must be finite");
  }
}

Generator::Generator(const NetworkSpec& spec, DType dtype, Rng& rng)
    : spec_(spec), dtype_(dtype) {
  if (spec_.role != Role::generator) {
    throw std::invalid_argument("Generator: spec role must be generator");
  }
  spec_.validate();
  const auto n = spec_.width;
  head_ = HetConv2d(spec_.in_channels, n, spec_.head_kernel, 1, 1, dtype, rng);
  head_act_ = ActivationLayer(spec_.activation, 0.25, dtype);
  for (std::int64_t b = 0; b < spec_.blocks; ++b) {
    blocks_.emplace_back(n, spec_.block_kernel, spec_.block_part, spec_.activation, dtype, rng,
                         spec_.residual_init_scale);
  }
  post_ = HetConv2d(n, n, spec_.post_kernel, spec_.post_part, 1, dtype, rng);
  for (auto r : spec_.upscale) {
    stages_.push_back({HetConv2d(n, n * r * r, spec_.upsample_kernel, spec_.upsample_part, 1,
                                 dtype, rng),
                       r, ActivationLayer(spec_.activation, 0.25, dtype)});
  }
  tail_ = HetConv2d(n, spec_.out_channels, spec_.tail_kernel, 1, 1, dtype, rng,
                    spec_.tail_init_scale);
}

Tensor Generator::forward(const Tensor& lr) const {
  if (lr.ndim() != 4 || lr.dim(1) != spec_.in_channels) {
    throw ShapeError("Generator: expected input [N," + std::to_string(spec_.in_channels) +
                     ",H,W], got " + shape_str(lr.shape()));
  }
  const Tensor head = head_act_.forward(head_.forward(lr));
  Tensor h = head;
  for (const auto& block : blocks_) h = block.forward(h);
  h = add(post_.forward(h), head);
  for (const auto& stage : stages_) {
    h = stage.act.forward(pixel_shuffle(stage.conv.forward(h), stage.factor));
  }
  Tensor out = tail_.forward(h);
  if (spec_.bicubic_skip) out = add(out, data::upscale_bicubic(lr.detach()));
  return out;
}

ParameterList Generator::parameters() const {
  ParameterList out;
  head_.append_parameters("head", out);
  head_act_.append_parameters("head.act", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].append_parameters("blocks." + std::to_string(b), out);
  }
  post_.append_parameters("post", out);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const auto prefix = "upsample." + std::to_string(s);
    stages_[s].conv.append_parameters(prefix + ".conv", out);
    stages_[s].act.append_parameters(prefix + ".act", out);
  }
  tail_.append_parameters("tail", out);
  return out;
}

std::vector<LayerInfo> Generator::describe() const {
  std::vector<LayerInfo> out;
  out.push_back(head_.info("head"));
  out.push_back(head_act_.info("head.act"));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].append_info("blocks." + std::to_string(b), out);
  }
  out.push_back(post_.info("post"));
  LayerInfo skip;
  skip.name = "post.long_skip";
  skip.kind = "residual_add";
  out.push_back(skip);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const auto prefix = "upsample." + std::to_string(s);
    out.push_back(stages_[s].conv.info(prefix + ".conv"));
    LayerInfo shuffle;
    shuffle.name = prefix + ".shuffle";
    shuffle.kind = "pixel_shuffle";
    shuffle.in_channels = stages_[s].conv.out_channels();
    shuffle.out_channels = spec_.width;
    shuffle.stride = stages_[s].factor;
    out.push_back(shuffle);
    out.push_back(stages_[s].act.info(prefix + ".act"));
  }
  out.push_back(tail_.info("tail"));
  return out;
}

std::vector<std::pair<std::string, const HetConv2d*>> Generator::conv_layers() const {
  std::vector<std::pair<std::string, const HetConv2d*>> out;
  out.emplace_back("head", &head_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto prefix = "blocks." + std::to_string(b);
    out.emplace_back(prefix + ".conv1", &blocks_[b].conv1());
    out.emplace_back(prefix + ".conv2", &blocks_[b].conv2());
  }
  out.emplace_back("post", &post_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    out.emplace_back("upsample." + std::to_string(s) + ".conv", &stages_[s].conv);
  }
  out.emplace_back("tail", &tail_);
  return out;
}

Generator Generator::clone() const {
  Rng scratch(0);
  Generator copy(spec_, dtype_, scratch);
  copy_parameters(parameters(), copy.parameters());
  return copy;
}

Critic::Critic(const NetworkSpec& spec, DType dtype, Rng& rng) : spec_(spec), dtype_(dtype) {
  if (spec_.role != Role::critic) {
    throw std::invalid_argument("Critic: spec role must be critic");
  }
  spec_.validate();
  std::int64_t channels = spec_.in_channels;
  for (const auto& layer : spec_.critic_layers) {
    // The image-facing layer always uses full kernels.
    const auto part = convs_.empty() ? 1 : spec_.critic_part;
    convs_.emplace_back(channels, layer.channels, spec_.critic_kernel, part, layer.stride, dtype,
                        rng);
    acts_.emplace_back(Activation::leaky_relu, spec_.leaky_slope, dtype);
    channels = layer.channels;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  head_ = Tensor::uniform({channels, 1}, -bound, bound, rng, dtype);
  head_.set_requires_grad(true);
}

Tensor Critic::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != spec_.in_channels) {
    throw ShapeError("Critic: expected input [N," + std::to_string(spec_.in_channels) +
                     ",H,W], got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = acts_[i].forward(convs_[i].forward(h));
  }
  const auto n = h.dim(0), c = h.dim(1), plane = h.dim(2) * h.dim(3);
  // Global average pool to [N, C].
  Tensor pooled = mul_scalar(sum_to(reshape(h, {n, c, plane}), {n, c, 1}),
                             1.0 / static_cast<double>(plane));
  return reshape(matmul(reshape(pooled, {n, c}), head_), {n});
}

ParameterList Critic::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].append_parameters("convs." + std::to_string(i), out);
  }
  out.push_back({"head.weight", head_});
  return out;
}

std::vector<LayerInfo> Critic::describe() const {
  std::vector<LayerInfo> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.push_back(convs_[i].info("convs." + std::to_string(i)));
    out.push_back(acts_[i].info("convs." + std::to_string(i) + ".act"));
  }
  LayerInfo pool;
  pool.name = "pool";
  pool.kind = "global_avg_pool";
  out.push_back(pool);
  LayerInfo head;
  head.name = "head";
  head.kind = "linear";
  head.in_channels = head_.dim(0);
  head.out_channels = 1;
  out.push_back(head);
  return out;
}

std::vector<std::pair<std::string, const HetConv2d*>> Critic::conv_layers() const {
  std::vector<std::pair<std::string, const HetConv2d*>> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back("convs." + std::to_string(i), &convs_[i]);
  }
  return out;
}

Critic Critic::clone() const {
  Rng scratch(0);
  Critic copy(spec_, dtype_, scratch);
  copy_parameters(parameters(), copy.parameters());
  return copy;
}

void copy_parameters(const ParameterList& source, const ParameterList& target) {
  std::map<std::string, Tensor> by_name;
  for (const auto& p : source) by_name[p.name] = p.tensor;
  for (const auto& p : target) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw std::invalid_argument("copy_parameters: missing parameter '" + p.name + "'");
    }
    Tensor dst = p.tensor;
    dst.assign(it->second);
  }
}

}  // namespace hetsr::nn
