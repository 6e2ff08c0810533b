#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hetsr/cli.hpp"

namespace hetsr::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("invalid value '" + value + "' for " + key + ": expected " + want);
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string from_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string from_bool(bool v) { return v ? "true" : "false"; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

// "2,2"
std::vector<std::int64_t> to_int_list(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> out;
  for (const auto& item : split(v, ',')) out.push_back(to_int(key, item));
  if (out.empty()) bad_value(key, v, "a comma separated list of integers");
  return out;
}

std::string from_int_list(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// "64:1,64:2" as channels:stride pairs.
std::vector<nn::CriticLayerSpec> to_layers(const std::string& key, const std::string& v) {
  std::vector<nn::CriticLayerSpec> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) bad_value(key, v, "channels:stride pairs separated by commas");
    out.push_back({to_int(key, parts[0]), to_int(key, parts[1])});
  }
  if (out.empty()) bad_value(key, v, "channels:stride pairs separated by commas");
  return out;
}

std::string from_layers(const std::vector<nn::CriticLayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out += (i ? "," : "") + std::to_string(layers[i].channels) + ":" +
           std::to_string(layers[i].stride);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HETSR_INT(KEY, FIELD)                                                  \
  Entry {                                                                      \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = to_int(KEY, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }             \
  }
#define HETSR_DOUBLE(KEY, FIELD)                                                  \
  Entry {                                                                         \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }, \
        [](const RunConfig& c) { return from_double(c.FIELD); }                   \
  }
#define HETSR_BOOL(KEY, FIELD)                                                  \
  Entry {                                                                       \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); }, \
        [](const RunConfig& c) { return from_bool(c.FIELD); }                   \
  }
#define HETSR_STRING(KEY, FIELD)                                     \
  Entry {                                                            \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = v; },    \
        [](const RunConfig& c) { return c.FIELD; }                   \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"seed",
       [](RunConfig& c, const std::string& v) { c.train.seed = c.data.seed = to_uint("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"dtype",
       [](RunConfig& c, const std::string& v) {
         if (v != "f32" && v != "f64") bad_value("dtype", v, "f32 or f64");
         c.train.dtype = parse_dtype(v);
       },
       [](const RunConfig& c) { return std::string(dtype_name(c.train.dtype)); }},
      HETSR_INT("iterations", iterations),
      HETSR_STRING("output", output),
      HETSR_INT("checkpoint_every", checkpoint_every),
      HETSR_INT("sample_every", sample_every),
      HETSR_BOOL("resume", resume),
      HETSR_STRING("checkpoint", checkpoint),
      HETSR_INT("batch_size", train.batch_size),
      HETSR_INT("n_critic", train.n_critic),

      HETSR_INT("generator.width", train.generator.width),
      HETSR_INT("generator.blocks", train.generator.blocks),
      HETSR_INT("generator.head_kernel", train.generator.head_kernel),
      HETSR_INT("generator.block_kernel", train.generator.block_kernel),
      HETSR_INT("generator.block_part", train.generator.block_part),
      HETSR_INT("generator.post_kernel", train.generator.post_kernel),
      HETSR_INT("generator.post_part", train.generator.post_part),
      {"generator.upscale",
       [](RunConfig& c, const std::string& v) {
         c.train.generator.upscale = to_int_list("generator.upscale", v);
       },
       [](const RunConfig& c) { return from_int_list(c.train.generator.upscale); }},
      HETSR_INT("generator.upsample_kernel", train.generator.upsample_kernel),
      HETSR_INT("generator.upsample_part", train.generator.upsample_part),
      HETSR_INT("generator.tail_kernel", train.generator.tail_kernel),
      {"generator.activation",
       [](RunConfig& c, const std::string& v) {
         try {
           c.train.generator.activation = nn::parse_activation(v);
         } catch (const std::invalid_argument&) {
           bad_value("generator.activation", v, "none, relu, leaky_relu or prelu");
         }
       },
       [](const RunConfig& c) { return nn::activation_name(c.train.generator.activation); }},
      HETSR_DOUBLE("generator.residual_init_scale", train.generator.residual_init_scale),
      HETSR_BOOL("generator.bicubic_skip", train.generator.bicubic_skip),
      HETSR_DOUBLE("generator.tail_init_scale", train.generator.tail_init_scale),

      {"critic.layers",
       [](RunConfig& c, const std::string& v) {
         c.train.critic.critic_layers = to_layers("critic.layers", v);
       },
       [](const RunConfig& c) { return from_layers(c.train.critic.critic_layers); }},
      HETSR_INT("critic.kernel", train.critic.critic_kernel),
      HETSR_INT("critic.part", train.critic.critic_part),
      HETSR_DOUBLE("critic.leaky_slope", train.critic.leaky_slope),

      HETSR_DOUBLE("loss.lambda", train.loss.lambda),
      HETSR_DOUBLE("loss.mu", train.loss.mu),
      {"loss.content",
       [](RunConfig&, const std::string& v) {
         if (v != "mse") bad_value("loss.content", v, "mse");
       },
       [](const RunConfig&) { return std::string("mse"); }},
      {"wgan_stabilizer",
       [](RunConfig& c, const std::string& v) {
         try {
           c.train.loss.stabilizer = loss::parse_stabilizer(v);
         } catch (const std::invalid_argument&) {
           bad_value("wgan_stabilizer", v, "off, gradient_penalty or weight_clipping");
         }
       },
       [](const RunConfig& c) { return loss::stabilizer_name(c.train.loss.stabilizer); }},
      HETSR_DOUBLE("loss.penalty_coefficient", train.loss.penalty_coefficient),
      HETSR_DOUBLE("loss.clip_bound", train.loss.clip_bound),

      HETSR_DOUBLE("adam.lr", train.adam.lr),
      HETSR_DOUBLE("adam.beta1", train.adam.beta1),
      HETSR_DOUBLE("adam.beta2", train.adam.beta2),
      HETSR_DOUBLE("adam.eps", train.adam.eps),
      HETSR_DOUBLE("asgd.lr", train.asgd.lr),
      HETSR_DOUBLE("asgd.decay", train.asgd.decay),
      HETSR_DOUBLE("asgd.power", train.asgd.power),
      HETSR_INT("asgd.average_start", train.asgd.average_start),

      HETSR_STRING("data.root", data.root),
      HETSR_STRING("data.pattern", data.pattern),
      HETSR_INT("data.patch", data.patch),
      HETSR_INT("data.patches_per_image", data.patches_per_image),
      HETSR_DOUBLE("data.split", data.split),
  };
  return table;
}

#undef HETSR_INT
#undef HETSR_DOUBLE
#undef HETSR_BOOL
#undef HETSR_STRING

const Entry& find(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    train.validate();
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (checkpoint_every < 0 || sample_every < 0) {
    throw ConfigError("checkpoint_every and sample_every must be >= 0");
  }
  if (output.empty()) throw ConfigError("output must not be empty");
  if (train.critic.in_channels != 3 || train.generator.in_channels != 3 ||
      train.generator.out_channels != 3) {
    throw ConfigError("networks must read and write RGB images");
  }
}

std::string RunConfig::checkpoint_dir() const {
  return checkpoint.empty() ? output + "/checkpoint" : checkpoint;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.key);
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find(key).get(config);
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(config, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream text;
  text << in.rdbuf();
  RunConfig config;
  apply_config_text(config, text.str(), path);
  return config;
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

RunConfig toy_config() {
  RunConfig c;
  auto& g = c.train.generator;
  g.width = 32;
  g.blocks = 4;
  g.bicubic_skip = true;
  g.tail_init_scale = 0.0;
  c.train.critic.critic_layers = {{32, 2}, {64, 2}, {128, 2}};
  c.train.batch_size = 8;
  c.train.n_critic = 5;
  c.iterations = 300;
  c.data.patch = 96;
  c.data.patches_per_image = 1;
  c.data.split = 0.8;
  return c;
}

}  // namespace hetsr::cli
