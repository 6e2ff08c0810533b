#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hetsr/autograd.hpp"
#include "hetsr/checkpoint.hpp"
#include "hetsr/cli.hpp"
#include "hetsr/cost.hpp"
#include "hetsr/image_io.hpp"
#include "hetsr/metrics.hpp"
#include "hetsr/ops.hpp"
#include "hetsr/resample.hpp"

namespace hetsr::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

Tensor clamp_unit(const Tensor& t) {
  auto v = t.to_vector();
  for (auto& x : v) x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
  return Tensor::from(t.shape(), v, t.dtype());
}

// [3, H, W] image through the generator, clamped, as [3, 4H, 4W].
Tensor super_resolve(const nn::Generator& g, const Tensor& lr) {
  NoGradGuard no_grad;
  const Tensor x = reshape(lr.to(g.dtype()), {1, lr.dim(0), lr.dim(1), lr.dim(2)});
  const Tensor sr = clamp_unit(g.forward(x));
  return reshape(sr, {sr.dim(1), sr.dim(2), sr.dim(3)});
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

void require_dataset_dir(const std::string& root) {
  if (root.empty()) throw ConfigError("data.root is not set");
  if (!fs::is_directory(root)) {
    throw ConfigError("dataset directory '" + root + "' does not exist");
  }
}

std::unique_ptr<train::TrainState> open_checkpoint(const RunConfig& config) {
  const auto dir = config.checkpoint_dir();
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw ConfigError("no checkpoint at '" + dir + "'");
  }
  return train::load_checkpoint(dir);
}

void write_events(const std::string& path, const std::vector<train::TrainEvent>& events) {
  std::string text = "iter,kind,message\n";
  for (const auto& e : events) {
    text += std::to_string(e.iter) + "," + e.kind + ",\"" + e.message + "\"\n";
  }
  write_text(path, text);
}

// Runs `body`, mapping exceptions onto exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const data::DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

TrainSummary evaluate_pairs(const nn::Generator& generator,
                            const std::vector<data::ImagePair>& pairs) {
  TrainSummary s;
  for (const auto& p : pairs) {
    const Tensor sr = super_resolve(generator, p.lr).to(DType::f64);
    const Tensor hr = p.hr.to(DType::f64);
    const Tensor bic = data::upscale_bicubic(p.lr.to(DType::f64));
    s.val_psnr += metrics::psnr(sr, hr);
    s.val_ssim += metrics::ssim(sr, hr);
    s.bicubic_psnr += metrics::psnr(bic, hr);
    s.bicubic_ssim += metrics::ssim(bic, hr);
  }
  s.val_images = static_cast<std::int64_t>(pairs.size());
  if (s.val_images > 0) {
    const double n = static_cast<double>(s.val_images);
    s.val_psnr /= n;
    s.val_ssim /= n;
    s.bicubic_psnr /= n;
    s.bicubic_ssim /= n;
  }
  return s;
}

TrainSummary run_training(const RunConfig& config, std::ostream& log) {
  config.validate();
  require_dataset_dir(config.data.root);
  ensure_dir(config.output);
  write_text(config.output + "/config.txt", format_config(config));

  const auto ckpt_dir = config.checkpoint_dir();
  std::unique_ptr<train::TrainState> state;
  if (config.resume && fs::exists(fs::path(ckpt_dir) / "manifest.json")) {
    state = train::load_checkpoint(ckpt_dir);
    if (train::config_to_json(state->config) != train::config_to_json(config.train)) {
      throw ConfigError("checkpoint '" + ckpt_dir + "' was written with a different config");
    }
    log << "resuming at iteration " << state->iteration << "\n";
  } else {
    state = std::make_unique<train::TrainState>(config.train);
  }

  const auto ds = data::load_dataset(config.data);
  if (ds.train.empty()) throw data::DataError("no training patches in '" + config.data.root + "'");
  log << "training on " << ds.train.size() << " patches from " << ds.train_files.size()
      << " images, validating on " << ds.val.size() << "\n";

  // Rows after the checkpoint are dropped so a resumed log matches an
  // uninterrupted one.
  const auto metrics_path = config.output + "/metrics.csv";
  {
    train::MetricsCsv csv(metrics_path);
    for (const auto& m : state->history) csv.write(m);
  }
  train::MetricsCsv csv(metrics_path, true);

  const auto samples_dir = config.output + "/samples";
  if (config.sample_every > 0) ensure_dir(samples_dir);
  const auto boundary = [](std::int64_t it, std::int64_t every) {
    return every > 0 ? (it / every + 1) * every : INT64_MAX;
  };
  while (state->iteration < config.iterations) {
    const auto it = state->iteration;
    const auto stop = std::min({config.iterations, boundary(it, config.checkpoint_every),
                                boundary(it, config.sample_every)});
    train::fit(*state, ds.train, stop - it, [&](const train::StepMetrics& m) {
      csv.write(m);
      if (m.iter % 10 == 0 || m.iter == config.iterations) {
        log << "iter " << m.iter << " critic " << fmt("%.5g", m.critic_loss) << " gen "
            << fmt("%.5g", m.gen_loss) << " psnr " << fmt("%.3f", m.psnr) << " ssim "
            << fmt("%.4f", m.ssim) << "\n";
      }
    });
    const auto now = state->iteration;
    if (config.checkpoint_every > 0 && now % config.checkpoint_every == 0) {
      train::save_checkpoint(*state, ckpt_dir);
    }
    if (config.sample_every > 0 && now % config.sample_every == 0 && !ds.val.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "/iter_%06lld.png", static_cast<long long>(now));
      data::save_image(super_resolve(state->generator, ds.val.front().lr), samples_dir + name);
    }
  }
  train::save_checkpoint(*state, ckpt_dir);
  write_events(config.output + "/events.csv", state->events);

  TrainSummary s = evaluate_pairs(state->generator, ds.val);
  s.iterations = state->iteration;
  s.events = static_cast<std::int64_t>(state->events.size());
  write_text(config.output + "/summary.csv",
             "metric,value\nval_psnr," + fmt("%.17g", s.val_psnr) + "\nval_ssim," +
                 fmt("%.17g", s.val_ssim) + "\nbicubic_psnr," + fmt("%.17g", s.bicubic_psnr) +
                 "\nbicubic_ssim," + fmt("%.17g", s.bicubic_ssim) + "\n");
  return s;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto s = run_training(config, out);
    out << "done: " << s.iterations << " iterations, " << s.events << " events\n";
    if (s.val_images > 0) {
      out << "held-out psnr " << fmt("%.4f", s.val_psnr) << " ssim " << fmt("%.4f", s.val_ssim)
          << " (bicubic psnr " << fmt("%.4f", s.bicubic_psnr) << " ssim "
          << fmt("%.4f", s.bicubic_ssim) << ")\n";
    }
    return kExitOk;
  });
}

int cmd_sr(const RunConfig& config, const std::string& input, const std::string& output,
           const std::string& reference, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (input.empty() || output.empty()) throw ConfigError("sr needs an input and an output path");
    if (!fs::exists(input)) throw ConfigError("input image '" + input + "' does not exist");
    if (!reference.empty() && !fs::exists(reference)) {
      throw ConfigError("reference image '" + reference + "' does not exist");
    }
    const auto state = open_checkpoint(config);
    const Tensor lr = data::load_image(input);
    data::save_image(super_resolve(state->generator, lr), output);
    out << "wrote " << output << "\n";
    if (!reference.empty()) {
      // Scores the file as written, so they can be reproduced from disk.
      const Tensor sr = data::load_image(output);
      const Tensor hr = data::load_image(reference);
      if (sr.shape() != hr.shape()) {
        throw ConfigError("reference is " + shape_str(hr.shape()) + " but the output is " +
                          shape_str(sr.shape()));
      }
      out << "psnr " << fmt("%.10f", metrics::psnr(sr, hr)) << "\n";
      out << "ssim " << fmt("%.10f", metrics::ssim(sr, hr)) << "\n";
    }
    return kExitOk;
  });
}

int cmd_eval(const RunConfig& config, const std::string& dataset, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    config.validate();
    const auto root = dataset.empty() ? config.data.root : dataset;
    require_dataset_dir(root);
    const auto state = open_checkpoint(config);
    const auto pairs = data::load_eval_pairs(root, config.data.pattern);
    ensure_dir(config.output);
    write_text(config.output + "/config.txt", format_config(config));

    std::string csv = "image,psnr,ssim,bicubic_psnr,bicubic_ssim\n";
    double sums[4] = {};
    for (const auto& p : pairs) {
      const auto s = evaluate_pairs(state->generator, {p});
      const double row[4] = {s.val_psnr, s.val_ssim, s.bicubic_psnr, s.bicubic_ssim};
      csv += p.source;
      for (int i = 0; i < 4; ++i) {
        csv += "," + fmt("%.17g", row[i]);
        sums[i] += row[i];
      }
      csv += "\n";
      out << p.source << " psnr " << fmt("%.4f", row[0]) << " ssim " << fmt("%.4f", row[1])
          << " bicubic " << fmt("%.4f", row[2]) << " / " << fmt("%.4f", row[3]) << "\n";
    }
    const double n = static_cast<double>(pairs.size());
    csv += "mean";
    for (double v : sums) csv += "," + fmt("%.17g", v / n);
    csv += "\n";
    write_text(config.output + "/eval.csv", csv);
    out << "mean psnr " << fmt("%.4f", sums[0] / n) << " ssim " << fmt("%.4f", sums[1] / n)
        << " bicubic " << fmt("%.4f", sums[2] / n) << " / " << fmt("%.4f", sums[3] / n) << " over "
        << pairs.size() << " images\n";
    return kExitOk;
  });
}

int cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.validate();
    const auto& t = config.train;
    const auto lr_side = config.data.patch / data::kScale;
    const Shape lr_shape{1, t.generator.in_channels, lr_side, lr_side};
    const Shape hr_shape{1, t.critic.in_channels, config.data.patch, config.data.patch};

    struct Row {
      std::string network, variant;
      nn::CostReport report;
    };
    std::vector<Row> rows;
    Rng rng(0);
    for (const auto& [variant, spec] :
         {std::pair{"het", t.generator}, std::pair{"standard", t.generator.standard_twin()}}) {
      rows.push_back({"generator", variant,
                      nn::count_flops(nn::Generator(spec, DType::f32, rng), lr_shape)});
    }
    for (const auto& [variant, spec] :
         {std::pair{"het", t.critic}, std::pair{"standard", t.critic.standard_twin()}}) {
      rows.push_back(
          {"critic", variant, nn::count_flops(nn::Critic(spec, DType::f32, rng), hr_shape)});
    }

    std::string csv =
        "network,variant,layer,in,out,kernel,part,weights,standard_weights,weight_ratio,macs,"
        "standard_macs,mac_ratio\n";
    for (const auto& r : rows) {
      out << "== " << r.network << " (" << r.variant << ") ==\n" << nn::format_report(r.report);
      for (const auto& l : r.report.layers) {
        csv += r.network + "," + r.variant + "," + l.name + "," + std::to_string(l.in_channels) +
               "," + std::to_string(l.out_channels) + "," + std::to_string(l.kernel) + "," +
               std::to_string(l.part) + "," + std::to_string(l.weights) + "," +
               std::to_string(l.standard_weights) + "," + fmt("%.17g", l.weight_ratio()) + "," +
               std::to_string(l.macs) + "," + std::to_string(l.standard_macs) + "," +
               fmt("%.17g", l.mac_ratio()) + "\n";
      }
    }
    out << "generator conv-weight ratio vs standard twin: "
        << fmt("%.6f", rows[0].report.conv_weight_ratio()) << "\n";
    ensure_dir(config.output);
    write_text(config.output + "/config.txt", format_config(config));
    write_text(config.output + "/cost.csv", csv);
    return kExitOk;
  });
}

}  // namespace hetsr::cli
