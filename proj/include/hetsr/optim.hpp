#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hetsr/layers.hpp"

namespace hetsr::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Averaged SGD. The step size is lr / (1 + decay * lr * t)^power; from step
// `average_start` on, the average is the arithmetic mean of the iterates
// after that step, and before it the average tracks the current iterate.
struct AsgdConfig {
  double lr = 1e-4;
  double decay = 0.0;
  double power = 0.75;
  std::int64_t average_start = 0;
};

// Outcome of one optimizer step. Non-finite gradients leave every parameter
// and the step count untouched.
struct StepResult {
  bool applied = true;
  std::string warning;
};

class Optimizer {
 public:
  explicit Optimizer(nn::ParameterList params);
  virtual ~Optimizer() = default;

  // Uses each parameter's accumulated .grad(); missing grads count as zero.
  StepResult step();
  // Explicit gradients, one per parameter in order.
  virtual StepResult step(const std::vector<Tensor>& grads) = 0;
  void zero_grad();

  const nn::ParameterList& parameters() const { return params_; }
  std::int64_t step_count() const { return steps_; }

  // Internal buffers by name and scalar counters, for checkpoints.
  virtual nn::ParameterList state_tensors() const = 0;
  std::map<std::string, double> scalars() const;
  void load_scalars(const std::map<std::string, double>& values);

 protected:
  // Throws unless grads line up with the parameters; returns false if any
  // value is non-finite.
  bool check_grads(const std::vector<Tensor>& grads) const;

  nn::ParameterList params_;
  std::int64_t steps_ = 0;
};

class Adam : public Optimizer {
 public:
  Adam(nn::ParameterList params, AdamConfig config = {});
  using Optimizer::step;
  StepResult step(const std::vector<Tensor>& grads) override;
  nn::ParameterList state_tensors() const override;
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
};

class Asgd : public Optimizer {
 public:
  Asgd(nn::ParameterList params, AsgdConfig config = {});
  using Optimizer::step;
  StepResult step(const std::vector<Tensor>& grads) override;
  nn::ParameterList state_tensors() const override;
  const AsgdConfig& config() const { return config_; }
  // Averaged iterates, aligned with parameters().
  const std::vector<Tensor>& averages() const { return avg_; }
  double step_size(std::int64_t t) const;

 private:
  AsgdConfig config_;
  std::vector<Tensor> avg_;
};

// Clamps every parameter to [-bound, bound] in place.
void clip_parameters(const nn::ParameterList& params, double bound);

}  // namespace hetsr::train
