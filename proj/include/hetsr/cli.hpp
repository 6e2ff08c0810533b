#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsr/dataset.hpp"
#include "hetsr/trainer.hpp"

namespace hetsr::cli {

// Bad configuration or usage; commands map it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Settings shared by every command. The text form is one `key = value` per
// line; `#` starts a comment.
struct RunConfig {
  train::TrainConfig train;
  data::DatasetSpec data;
  std::int64_t iterations = 1000;
  std::string output = "run";
  std::int64_t checkpoint_every = 100;  // 0 saves only at the end
  std::int64_t sample_every = 100;      // 0 writes no sample images
  bool resume = false;                  // continue from <output>/checkpoint
  std::string checkpoint;               // for sr/eval; default <output>/checkpoint

  // Throws ConfigError naming the first invalid setting.
  void validate() const;
  std::string checkpoint_dir() const;
};

// Every recognised key, in the order format_config writes them.
std::vector<std::string> config_keys();

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Applies the lines of `text` on top of `config`. Unknown keys, duplicate
// keys and malformed values are errors; `origin` prefixes messages.
void apply_config_text(RunConfig& config, const std::string& text,
                       const std::string& origin = "config");
RunConfig load_config(const std::string& path);
// Complete text form; parsing it reproduces `config`.
std::string format_config(const RunConfig& config);

// Configuration of the small training run used for smoke tests: 4 blocks of
// width 32, three strided critic layers, batch 8, bicubic skip.
RunConfig toy_config();

struct TrainSummary {
  std::int64_t iterations = 0;
  std::int64_t events = 0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double bicubic_psnr = 0.0;
  double bicubic_ssim = 0.0;
  std::int64_t val_images = 0;
};

// SR vs bicubic quality on held-out pairs, each image scored separately and
// then averaged.
TrainSummary evaluate_pairs(const nn::Generator& generator,
                            const std::vector<data::ImagePair>& pairs);

// Runs training as configured, writing config.txt, metrics.csv, events.csv,
// checkpoints and samples under config.output. Throws ConfigError or
// data::DataError for bad inputs.
TrainSummary run_training(const RunConfig& config, std::ostream& log);

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_sr(const RunConfig& config, const std::string& input, const std::string& output,
           const std::string& reference, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, const std::string& dataset, std::ostream& out,
             std::ostream& err);
int cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace hetsr::cli
