#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hetsr/checkpoint.hpp"
#include "hetsr/cli.hpp"
#include "hetsr/image_io.hpp"
#include "hetsr/metrics.hpp"
#include "hetsr/resample.hpp"
#include "support.hpp"

using namespace hetsr;
using namespace hetsr::cli;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// A few seconds of training on a handful of small synthetic images.
RunConfig tiny_run(const std::string& name) {
  const auto dir = test::scratch_dir(name);
  data::write_synthetic_dataset(dir + "/images", 5, 48, 48, 1);
  RunConfig c;
  apply_config_text(c, R"(
    generator.width = 8
    generator.blocks = 1
    critic.layers = 8:2,8:2
    batch_size = 2
    n_critic = 1
    dtype = f64
    data.patch = 32
    data.patches_per_image = 1
    data.split = 0.6
    iterations = 3
    checkpoint_every = 2
    sample_every = 2
  )");
  c.data.root = dir + "/images";
  c.output = dir + "/run";
  return c;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config text sets values and round trips") {
    RunConfig c;
    apply_config_text(c, "# comment\nseed = 7\n  generator.blocks=3  # trailing\nadam.lr = 2.5e-4\n"
                         "wgan_stabilizer = off\ngenerator.upscale = 4\n");
    CHECK(c.train.seed == 7);
    CHECK(c.data.seed == 7);
    CHECK(c.train.generator.blocks == 3);
    CHECK(c.train.adam.lr == 2.5e-4);
    CHECK(c.train.loss.stabilizer == loss::Stabilizer::off);
    CHECK(c.train.generator.upscale == std::vector<std::int64_t>{4});

    RunConfig back;
    apply_config_text(back, format_config(c));
    CHECK(format_config(back) == format_config(c));
    CHECK(train::config_to_json(back.train) == train::config_to_json(c.train));
    for (const auto& key : config_keys()) CHECK(get_config_value(back, key) == get_config_value(c, key));
  }

  TEST_CASE("config errors carry their location") {
    RunConfig c;
    const auto message = [&](const std::string& text) {
      try {
        apply_config_text(c, text, "file.cfg");
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("seed = 1\nbogus = 2\n") == "file.cfg:2: unknown config key 'bogus'");
    CHECK(message("seed = 1\nseed = 2\n").find("duplicate key 'seed'") != std::string::npos);
    CHECK(message("batch_size = eight\n").find("file.cfg:1:") == 0);
    CHECK(message("just words\n").find("expected 'key = value'") != std::string::npos);
    CHECK(message("dtype = f16\n").find("dtype") != std::string::npos);
    CHECK_THROWS_AS(set_config_value(c, "generator.part", "4"), ConfigError);
  }

  TEST_CASE("invalid settings fail validation") {
    RunConfig c;
    c.iterations = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    set_config_value(c, "generator.block_part", "5");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(toy_config().validate());
  }

  TEST_CASE("toy configuration") {
    const RunConfig t = toy_config();
    CHECK(t.train.generator.width == 32);
    CHECK(t.train.generator.blocks == 4);
    CHECK(t.train.critic.critic_layers.size() == 3);
    CHECK(t.train.batch_size == 8);
    CHECK(t.iterations == 300);
    CHECK(t.train.loss.lambda == 0.001);
    CHECK(t.train.loss.mu == 0.001);
    CHECK(t.train.adam.lr == 1e-4);
    CHECK(t.data.patch == 96);
  }

  TEST_CASE("missing dataset exits 2 and names the path") {
    RunConfig c = tiny_run("cli_missing");
    c.data.root = c.output + "/nowhere";
    std::ostringstream out, err;
    CHECK(cmd_train(c, out, err) == kExitUsage);
    CHECK(err.str().find(c.data.root) != std::string::npos);
    c.data.root.clear();
    std::ostringstream err2;
    CHECK(cmd_train(c, out, err2) == kExitUsage);
    CHECK(err2.str().find("data.root") != std::string::npos);
  }

  TEST_CASE("zero iterations write a header-only metric log") {
    RunConfig c = tiny_run("cli_zero");
    c.iterations = 0;
    std::ostringstream out, err;
    REQUIRE(cmd_train(c, out, err) == kExitOk);
    CHECK(read_file(c.output + "/metrics.csv") == std::string(train::MetricsCsv::kHeader) + "\n");
    CHECK(fs::exists(c.output + "/checkpoint/manifest.json"));
  }

  TEST_CASE("train writes its artefacts and resumes to the same log") {
    RunConfig c = tiny_run("cli_train");
    std::ostringstream out, err;
    REQUIRE(cmd_train(c, out, err) == kExitOk);
    CHECK(err.str().empty());
    const auto log = read_file(c.output + "/metrics.csv");
    CHECK(lines_of(log).size() == 4);
    CHECK(fs::exists(c.output + "/samples/iter_000002.png"));
    CHECK(fs::exists(c.output + "/events.csv"));
    CHECK(fs::exists(c.output + "/summary.csv"));
    // The echoed config reproduces the run.
    CHECK(format_config(load_config(c.output + "/config.txt")) == format_config(c));

    RunConfig longer = c;
    longer.iterations = 5;
    longer.resume = true;
    std::ostringstream out2;
    REQUIRE(cmd_train(longer, out2, err) == kExitOk);
    CHECK(out2.str().find("resuming at iteration 3") != std::string::npos);

    RunConfig straight = c;
    straight.iterations = 5;
    straight.output = c.output + "_straight";
    std::ostringstream out3;
    REQUIRE(cmd_train(straight, out3, err) == kExitOk);
    CHECK(read_file(longer.output + "/metrics.csv") == read_file(straight.output + "/metrics.csv"));

    RunConfig changed = longer;
    changed.train.loss.mu = 0.5;
    std::ostringstream err3;
    CHECK(cmd_train(changed, out3, err3) == kExitUsage);
    CHECK(err3.str().find("different config") != std::string::npos);
  }

  TEST_CASE("sr and eval use the trained checkpoint") {
    RunConfig c = tiny_run("cli_sr");
    std::ostringstream out, err;
    REQUIRE(cmd_train(c, out, err) == kExitOk);

    const auto dir = fs::path(c.output).parent_path().string();
    const Tensor hr = data::load_image(c.data.root + "/img_000.png");
    data::save_image(data::degrade_bicubic(hr), dir + "/lr.png");
    std::ostringstream sr_out;
    REQUIRE(cmd_sr(c, dir + "/lr.png", dir + "/sr.png", c.data.root + "/img_000.png", sr_out, err) ==
            kExitOk);
    const Tensor sr = data::load_image(dir + "/sr.png");
    CHECK(sr.shape() == Shape{3, 48, 48});
    char expected[64];
    std::snprintf(expected, sizeof expected, "psnr %.10f", metrics::psnr(sr, hr));
    CHECK(sr_out.str().find(expected) != std::string::npos);

    // Same input, same bytes.
    std::ostringstream again;
    REQUIRE(cmd_sr(c, dir + "/lr.png", dir + "/sr2.png", "", again, err) == kExitOk);
    CHECK(read_file(dir + "/sr.png") == read_file(dir + "/sr2.png"));

    std::ostringstream bad;
    CHECK(cmd_sr(c, dir + "/absent.png", dir + "/x.png", "", out, bad) == kExitUsage);
    RunConfig no_ckpt = c;
    no_ckpt.checkpoint = dir + "/nothing";
    CHECK(cmd_sr(no_ckpt, dir + "/lr.png", dir + "/x.png", "", out, bad) == kExitUsage);

    // With a single image the mean row equals that image's row.
    fs::create_directories(dir + "/one");
    fs::copy_file(c.data.root + "/img_001.png", dir + "/one/img_001.png");
    RunConfig e = c;
    e.output = dir + "/eval";
    e.checkpoint = c.checkpoint_dir();
    REQUIRE(cmd_eval(e, dir + "/one", out, err) == kExitOk);
    const auto rows = lines_of(read_file(e.output + "/eval.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "image,psnr,ssim,bicubic_psnr,bicubic_ssim");
    CHECK(rows[1].substr(rows[1].find(',')) == rows[2].substr(rows[2].find(',')));
  }

  TEST_CASE("analyze reports the het and standard networks") {
    RunConfig c = tiny_run("cli_analyze");
    std::ostringstream out, err;
    REQUIRE(cmd_analyze(c, out, err) == kExitOk);
    CHECK(out.str().find("generator (het)") != std::string::npos);
    CHECK(out.str().find("critic (standard)") != std::string::npos);
    CHECK(fs::exists(c.output + "/cost.csv"));

    // With every part set to 1 the networks coincide with their twins.
    set_config_value(c, "generator.block_part", "1");
    set_config_value(c, "generator.post_part", "1");
    std::ostringstream out1;
    REQUIRE(cmd_analyze(c, out1, err) == kExitOk);
    CHECK(out1.str().find("ratio vs standard twin: 1.000000") != std::string::npos);
  }
}
