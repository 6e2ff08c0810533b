#include "hetsr/trainer.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetsr/autograd.hpp"
#include "hetsr/metrics.hpp"
#include "hetsr/ops.hpp"

namespace hetsr::train {

void TrainConfig::validate() const {
  generator.validate();
  critic.validate();
  loss.validate();
  if (generator.role != nn::Role::generator || critic.role != nn::Role::critic) {
    throw std::invalid_argument("TrainConfig: network roles are swapped");
  }
  if (generator.out_channels != critic.in_channels) {
    throw std::invalid_argument("TrainConfig: critic input channels must match generator output");
  }
  if (n_critic < 0) throw std::invalid_argument("TrainConfig: n_critic must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(adam.lr > 0) || !(asgd.lr > 0)) {
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  }
}

namespace {

// Network construction draws from its own streams so the training stream
// starts fresh.
nn::Generator make_generator(const TrainConfig& c) {
  c.validate();
  Rng rng(Rng::derive(c.seed, 1));
  return nn::Generator(c.generator, c.dtype, rng);
}

nn::Critic make_critic(const TrainConfig& c) {
  Rng rng(Rng::derive(c.seed, 2));
  return nn::Critic(c.critic, c.dtype, rng);
}

// Freezes the critic's parameters for the generator update.
class FrozenParameters {
 public:
  explicit FrozenParameters(const nn::ParameterList& params) : params_(params) {
    for (auto& p : params_) p.tensor.set_requires_grad(false);
  }
  ~FrozenParameters() {
    for (auto& p : params_) p.tensor.set_requires_grad(true);
  }
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  nn::ParameterList params_;
};

Tensor clamp_unit(const Tensor& t) {
  auto v = t.to_vector();
  for (auto& x : v) x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
  return Tensor::from(t.shape(), v, t.dtype());
}

void record_event(TrainState& s, const std::string& kind, const std::string& message) {
  s.events.push_back({s.iteration, kind, message});
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config(cfg),
      generator(make_generator(cfg)),
      critic(make_critic(cfg)),
      generator_opt(generator.parameters(), cfg.adam),
      critic_opt(critic.parameters(), cfg.asgd),
      rng(Rng::derive(cfg.seed, 3)) {}

StepMetrics train_step(TrainState& s, const Tensor& lr_batch, const Tensor& hr_batch) {
  const auto& cfg = s.config;
  const auto scale = cfg.generator.scale_factor();
  if (lr_batch.ndim() != 4 || hr_batch.ndim() != 4 || lr_batch.dim(0) != hr_batch.dim(0) ||
      hr_batch.dim(2) != lr_batch.dim(2) * scale || hr_batch.dim(3) != lr_batch.dim(3) * scale) {
    throw ShapeError("train_step: inconsistent batches " + shape_str(lr_batch.shape()) + " and " +
                     shape_str(hr_batch.shape()));
  }
  const Tensor lr = lr_batch.to(cfg.dtype);
  const Tensor hr = hr_batch.to(cfg.dtype);
  ++s.iteration;
  StepMetrics m;
  m.iter = s.iteration;

  const auto critic_fn = [&](const Tensor& x) { return s.critic.forward(x); };
  // Critic updates leave the generator untouched, so one recorded forward
  // serves both phases.
  s.generator_opt.zero_grad();
  const Tensor sr = s.generator.forward(lr);
  if (cfg.n_critic > 0) {
    const Tensor fake = sr.detach();
    for (std::int64_t k = 0; k < cfg.n_critic; ++k) {
      s.critic_opt.zero_grad();
      Tensor penalty;
      if (cfg.loss.stabilizer == loss::Stabilizer::gradient_penalty) {
        penalty = loss::gradient_penalty(critic_fn, hr, fake, cfg.loss.penalty_coefficient, s.rng);
      }
      Tensor closs = loss::critic_loss(s.critic.forward(hr), s.critic.forward(fake), penalty);
      m.critic_loss = closs.item();
      if (!std::isfinite(m.critic_loss)) {
        record_event(s, "nonfinite_critic_loss", "critic loss is not finite; update skipped");
        break;
      }
      backward(closs);
      const auto r = s.critic_opt.step();
      if (!r.applied) {
        record_event(s, "skipped_step", r.warning);
        continue;
      }
      if (cfg.loss.stabilizer == loss::Stabilizer::weight_clipping) {
        clip_parameters(s.critic.parameters(), cfg.loss.clip_bound);
      }
      ++s.critic_updates;
    }
    s.critic_opt.zero_grad();
  }

  {
    FrozenParameters frozen(s.critic.parameters());
    Tensor fake_scores;
    if (cfg.loss.lambda > 0) {
      fake_scores = s.critic.forward(sr);
    } else {
      NoGradGuard no_grad;
      fake_scores = s.critic.forward(sr.detach());
    }
    const auto terms = loss::generator_loss(sr, hr, fake_scores, cfg.loss);
    m.gen_loss = terms.total.item();
    m.content_loss = terms.content.item();
    m.adv_loss = terms.adversarial.item();
    m.fcos = terms.fcos.item();
    const Tensor shown = clamp_unit(sr.detach());
    m.psnr = metrics::mean_psnr(shown, hr);
    m.ssim = metrics::ssim(shown, hr);
    if (!std::isfinite(m.gen_loss)) {
      record_event(s, "nonfinite_generator_loss", "generator loss is not finite; update skipped");
    } else {
      backward(terms.total);
      const auto r = s.generator_opt.step();
      if (r.applied) {
        ++s.generator_updates;
      } else {
        record_event(s, "skipped_step", r.warning);
      }
    }
    s.generator_opt.zero_grad();
  }
  s.history.push_back(m);
  return m;
}

std::uint64_t batch_seed(std::uint64_t seed) { return Rng::derive(seed, 4); }

void fit(TrainState& s, const std::vector<data::ImagePair>& pairs, std::int64_t iterations,
         const MetricSink& sink) {
  if (iterations < 0) throw std::invalid_argument("fit: iterations must be >= 0");
  if (iterations == 0) return;
  data::BatchIterator it(pairs, s.config.batch_size, batch_seed(s.config.seed), s.config.dtype);
  it.seek(s.epoch, s.position);
  for (std::int64_t i = 0; i < iterations; ++i) {
    const auto batch = it.next();
    const auto m = train_step(s, batch.lr, batch.hr);
    s.epoch = it.epoch();
    s.position = it.position();
    if (sink) sink(m);
  }
}

std::string format_metrics_row(const StepMetrics& m) {
  char line[512];
  std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(m.iter), m.critic_loss, m.gen_loss, m.content_loss,
                m.adv_loss, m.fcos, m.psnr, m.ssim);
  return line;
}

MetricsCsv::MetricsCsv(const std::string& path, bool append) {
  const bool existing = append && std::filesystem::exists(path);
  file_ = std::fopen(path.c_str(), existing ? "a" : "w");
  if (!file_) {
    throw std::runtime_error("cannot open metrics log '" + path + "': " + std::strerror(errno));
  }
  if (!existing) {
    std::fprintf(file_, "%s\n", kHeader);
    std::fflush(file_);
  }
}

MetricsCsv::~MetricsCsv() {
  if (file_) std::fclose(file_);
}

void MetricsCsv::write(const StepMetrics& m) {
  std::fprintf(file_, "%s\n", format_metrics_row(m).c_str());
  std::fflush(file_);
}

std::vector<StepMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics log '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != MetricsCsv::kHeader) {
    throw std::runtime_error("metrics log '" + path + "' has an unexpected header");
  }
  std::vector<StepMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    StepMetrics m;
    std::string fields[7];
    row >> m.iter;
    for (auto& f : fields) row >> f;
    double* targets[7] = {&m.critic_loss, &m.gen_loss, &m.content_loss, &m.adv_loss,
                          &m.fcos,        &m.psnr,     &m.ssim};
    for (int i = 0; i < 7; ++i) *targets[i] = std::strtod(fields[i].c_str(), nullptr);
    out.push_back(m);
  }
  return out;
}

}  // namespace hetsr::train
