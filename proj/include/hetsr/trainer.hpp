#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hetsr/dataset.hpp"
#include "hetsr/losses.hpp"
#include "hetsr/network.hpp"
#include "hetsr/optim.hpp"
#include "hetsr/random.hpp"

namespace hetsr::train {

struct TrainConfig {
  nn::NetworkSpec generator = nn::NetworkSpec::default_generator();
  nn::NetworkSpec critic = nn::NetworkSpec::default_critic();
  loss::LossConfig loss;
  AdamConfig adam;   // generator
  AsgdConfig asgd;   // critic
  std::int64_t n_critic = 5;
  std::int64_t batch_size = 16;
  std::uint64_t seed = 0;
  DType dtype = DType::f32;

  void validate() const;
};

// One row of the metric log. critic_loss is that of the last critic update
// in the step (0 when n_critic is 0); psnr and ssim compare the batch's
// super-resolved output, clamped to [0, 1], with its HR targets.
struct StepMetrics {
  std::int64_t iter = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  double content_loss = 0.0;
  double adv_loss = 0.0;
  double fcos = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

struct TrainEvent {
  std::int64_t iter = 0;
  std::string kind;  // "nonfinite_critic_loss", "nonfinite_generator_loss", "skipped_step"
  std::string message;
};

// Everything a run needs to continue: networks, optimizers, random state,
// data cursor and history. Not copyable because the optimizers alias the
// network parameters.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& config);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  TrainConfig config;
  nn::Generator generator;
  nn::Critic critic;
  Adam generator_opt;
  Asgd critic_opt;
  Rng rng;
  std::int64_t iteration = 0;
  std::int64_t critic_updates = 0;
  std::int64_t generator_updates = 0;
  std::int64_t epoch = 0;     // data cursor
  std::int64_t position = 0;
  std::vector<StepMetrics> history;
  std::vector<TrainEvent> events;
};

// n_critic critic updates on (HR, detached SR), then one generator update.
// A non-finite loss skips the affected update and records an event.
StepMetrics train_step(TrainState& state, const Tensor& lr_batch, const Tensor& hr_batch);

using MetricSink = std::function<void(const StepMetrics&)>;

// Runs `iterations` steps over shuffled mini-batches of `pairs`, resuming at
// the state's data cursor. Each step's metrics go to the history and `sink`.
void fit(TrainState& state, const std::vector<data::ImagePair>& pairs, std::int64_t iterations,
         const MetricSink& sink = {});

// Seed of the batch shuffling stream for a run seed.
std::uint64_t batch_seed(std::uint64_t seed);

// CSV metric log with a fixed header; values use %.17g so files from
// identical runs compare byte for byte.
class MetricsCsv {
 public:
  static constexpr const char* kHeader =
      "iter,critic_loss,gen_loss,content_loss,adv_loss,fcos,psnr,ssim";

  // Truncates unless `append` is set and the file exists.
  explicit MetricsCsv(const std::string& path, bool append = false);
  ~MetricsCsv();
  MetricsCsv(const MetricsCsv&) = delete;
  MetricsCsv& operator=(const MetricsCsv&) = delete;

  void write(const StepMetrics& m);

 private:
  std::FILE* file_ = nullptr;
};

std::string format_metrics_row(const StepMetrics& m);
std::vector<StepMetrics> read_metrics_csv(const std::string& path);

}  // namespace hetsr::train
