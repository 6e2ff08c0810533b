#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hetsr/cli.hpp"
#include "hetsr/dataset.hpp"
#include "hetsr/parallel.hpp"

using namespace hetsr;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  std::int64_t iterations = -1;
  bool f64 = false;
  bool toy = false;
  std::string output;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file of key = value lines");
  cmd->add_flag("--toy", c.toy, "Start from the small smoke-test configuration");
  cmd->add_option("--set", c.sets, "Override one setting, KEY=VALUE (repeatable)");
  cmd->add_option("--seed", c.seed, "Random seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--iterations", c.iterations, "Generator steps")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--f64", c.f64, "Train and run in 64-bit floating point");
  cmd->add_option("--output", c.output, "Output directory");
  cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint directory");
}

// Defaults, then the config file, then flags.
cli::RunConfig resolve(const Common& c) {
  cli::RunConfig config = c.toy ? cli::toy_config() : cli::RunConfig{};
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw cli::ConfigError("cannot read config file '" + c.config_path + "'");
    std::stringstream text;
    text << in.rdbuf();
    cli::apply_config_text(config, text.str(), c.config_path);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw cli::ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    cli::set_config_value(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed >= 0) cli::set_config_value(config, "seed", std::to_string(c.seed));
  if (c.iterations >= 0) config.iterations = c.iterations;
  if (c.f64) config.train.dtype = DType::f64;
  if (!c.output.empty()) config.output = c.output;
  if (!c.checkpoint.empty()) config.checkpoint = c.checkpoint;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();
  CLI::App app{"Heterogeneous-kernel WGAN super-resolution (x4)"};
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "Train a generator and critic");
  add_common(train, common);

  std::string input, output_png, reference;
  auto* sr = app.add_subcommand("sr", "Upscale one PNG by 4 with a trained generator");
  add_common(sr, common);
  sr->add_option("input", input, "Low-resolution PNG")->required();
  sr->add_option("output_png", output_png, "Where to write the upscaled PNG")->required();
  sr->add_option("--reference", reference, "High-resolution PNG to score the output against");

  std::string dataset;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a folder of HR images");
  add_common(eval, common);
  eval->add_option("dataset", dataset, "Image folder (default: data.root)");

  auto* analyze = app.add_subcommand("analyze", "Parameter and MAC counts vs standard convs");
  add_common(analyze, common);

  std::int64_t count = 80, size = 96;
  std::uint64_t synth_seed = 0;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a folder of synthetic training images");
  synth->add_option("dir", synth_dir, "Target folder")->required();
  synth->add_option("--count", count, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Image side in pixels")->check(CLI::Range(12, 4096));
  synth->add_option("--seed", synth_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  if (synth->parsed()) {
    try {
      const auto files = data::write_synthetic_dataset(synth_dir, count, size, size, synth_seed);
      std::cout << "wrote " << files.size() << " images to " << synth_dir << "\n";
      return cli::kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return cli::kExitRuntime;
    }
  }

  cli::RunConfig config;
  try {
    config = resolve(common);
  } catch (const cli::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
  if (train->parsed()) return cli::cmd_train(config, std::cout, std::cerr);
  if (sr->parsed()) return cli::cmd_sr(config, input, output_png, reference, std::cout, std::cerr);
  if (eval->parsed()) return cli::cmd_eval(config, dataset, std::cout, std::cerr);
  return cli::cmd_analyze(config, std::cout, std::cerr);
}
