#include "hetsr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hetsr::train {

Optimizer::Optimizer(nn::ParameterList params) : params_(std::move(params)) {}

StepResult Optimizer::step() {
  std::vector<Tensor> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) {
    Tensor g = p.tensor.grad();
    grads.push_back(g.defined() ? g : Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  }
  return step(grads);
}

void Optimizer::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

bool Optimizer::check_grads(const std::vector<Tensor>& grads) const {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("optimizer: expected " + std::to_string(params_.size()) +
                                " gradients, got " + std::to_string(grads.size()));
  }
  bool finite = true;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i].tensor.shape()) {
      throw ShapeError("optimizer: gradient for '" + params_[i].name + "' has shape " +
                       shape_str(grads[i].shape()) + ", parameter has " +
                       shape_str(params_[i].tensor.shape()));
    }
    for (double v : grads[i].to_vector()) {
      if (!std::isfinite(v)) finite = false;
    }
  }
  return finite;
}

std::map<std::string, double> Optimizer::scalars() const {
  return {{"steps", static_cast<double>(steps_)}};
}

void Optimizer::load_scalars(const std::map<std::string, double>& values) {
  steps_ = static_cast<std::int64_t>(values.at("steps"));
}

namespace {

std::vector<Tensor> zeros_like(const nn::ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  return out;
}

StepResult skipped(const std::string& kind) {
  return {false, kind + ": non-finite gradient, step skipped"};
}

}  // namespace

Adam::Adam(nn::ParameterList params, AdamConfig config)
    : Optimizer(std::move(params)), config_(config) {
  if (!(config_.lr > 0)) throw std::invalid_argument("Adam: lr must be positive");
  m_ = zeros_like(params_);
  v_ = zeros_like(params_);
}

StepResult Adam::step(const std::vector<Tensor>& grads) {
  if (!check_grads(grads)) return skipped("adam");
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    const Tensor g = grads[i].to(p.dtype());
    dispatch(p.dtype(), [&]<typename T>() {
      auto w = p.data<T>();
      auto m = m_[i].data<T>();
      auto v = v_[i].data<T>();
      const auto gv = g.data<T>();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = gv[k];
        const double mk = b1 * m[k] + (1.0 - b1) * gk;
        const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        w[k] = static_cast<T>(w[k] - config_.lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps));
      }
    });
  }
  return {};
}

nn::ParameterList Adam::state_tensors() const {
  nn::ParameterList out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"m." + params_[i].name, m_[i]});
    out.push_back({"v." + params_[i].name, v_[i]});
  }
  return out;
}

Asgd::Asgd(nn::ParameterList params, AsgdConfig config)
    : Optimizer(std::move(params)), config_(config) {
  if (!(config_.lr > 0)) throw std::invalid_argument("ASGD: lr must be positive");
  if (config_.decay < 0 || config_.average_start < 0) {
    throw std::invalid_argument("ASGD: decay and averaging start must be non-negative");
  }
  for (const auto& p : params_) avg_.push_back(p.tensor.detach().clone());
}

double Asgd::step_size(std::int64_t t) const {
  return config_.lr /
         std::pow(1.0 + config_.decay * config_.lr * static_cast<double>(t), config_.power);
}

StepResult Asgd::step(const std::vector<Tensor>& grads) {
  if (!check_grads(grads)) return skipped("asgd");
  const double eta = step_size(steps_);
  ++steps_;
  const auto k = steps_ - config_.average_start;
  const double mix = k >= 1 ? 1.0 / static_cast<double>(k) : 1.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    const Tensor g = grads[i].to(p.dtype());
    dispatch(p.dtype(), [&]<typename T>() {
      auto w = p.data<T>();
      auto a = avg_[i].data<T>();
      const auto gv = g.data<T>();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double wj = w[j] - eta * static_cast<double>(gv[j]);
        w[j] = static_cast<T>(wj);
        a[j] = static_cast<T>(a[j] + mix * (static_cast<double>(w[j]) - a[j]));
      }
    });
  }
  return {};
}

nn::ParameterList Asgd::state_tensors() const {
  nn::ParameterList out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"avg." + params_[i].name, avg_[i]});
  }
  return out;
}

void clip_parameters(const nn::ParameterList& params, double bound) {
  if (!(bound > 0)) throw std::invalid_argument("clip_parameters: bound must be positive");
  for (const auto& p : params) {
    Tensor t = p.tensor;
    dispatch(t.dtype(), [&]<typename T>() {
      for (auto& v : t.data<T>()) {
        v = static_cast<T>(std::clamp(static_cast<double>(v), -bound, bound));
      }
    });
  }
}

}  // namespace hetsr::train
