#include "hetsr/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace hetsr::train {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'S', 'R', 'T'};
constexpr std::uint32_t kArrayVersion = 1;
constexpr int kManifestVersion = 1;

template <class V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V take(std::ifstream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw CheckpointError("truncated array file '" + path + "'");
  }
  return v;
}

// JSON has no NaN or infinity; those travel as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  throw CheckpointError("bad number '" + s + "' in manifest");
}

json spec_json(const nn::NetworkSpec& s) {
  json j;
  j["role"] = nn::role_name(s.role);
  j["in_channels"] = s.in_channels;
  j["out_channels"] = s.out_channels;
  j["width"] = s.width;
  j["blocks"] = s.blocks;
  j["head_kernel"] = s.head_kernel;
  j["block_kernel"] = s.block_kernel;
  j["block_part"] = s.block_part;
  j["post_kernel"] = s.post_kernel;
  j["post_part"] = s.post_part;
  j["upscale"] = s.upscale;
  j["upsample_kernel"] = s.upsample_kernel;
  j["upsample_part"] = s.upsample_part;
  j["tail_kernel"] = s.tail_kernel;
  j["activation"] = nn::activation_name(s.activation);
  j["residual_init_scale"] = s.residual_init_scale;
  j["bicubic_skip"] = s.bicubic_skip;
  j["tail_init_scale"] = s.tail_init_scale;
  json layers = json::array();
  for (const auto& l : s.critic_layers) layers.push_back({l.channels, l.stride});
  j["critic_layers"] = layers;
  j["critic_kernel"] = s.critic_kernel;
  j["critic_part"] = s.critic_part;
  j["leaky_slope"] = s.leaky_slope;
  return j;
}

nn::NetworkSpec spec_from(const json& j) {
  nn::NetworkSpec s;
  s.role = nn::parse_role(j.at("role").get<std::string>());
  s.in_channels = j.at("in_channels");
  s.out_channels = j.at("out_channels");
  s.width = j.at("width");
  s.blocks = j.at("blocks");
  s.head_kernel = j.at("head_kernel");
  s.block_kernel = j.at("block_kernel");
  s.block_part = j.at("block_part");
  s.post_kernel = j.at("post_kernel");
  s.post_part = j.at("post_part");
  s.upscale = j.at("upscale").get<std::vector<std::int64_t>>();
  s.upsample_kernel = j.at("upsample_kernel");
  s.upsample_part = j.at("upsample_part");
  s.tail_kernel = j.at("tail_kernel");
  s.activation = nn::parse_activation(j.at("activation").get<std::string>());
  s.residual_init_scale = j.at("residual_init_scale");
  s.bicubic_skip = j.at("bicubic_skip");
  s.tail_init_scale = j.at("tail_init_scale");
  s.critic_layers.clear();
  for (const auto& l : j.at("critic_layers")) {
    s.critic_layers.push_back({l.at(0).get<std::int64_t>(), l.at(1).get<std::int64_t>()});
  }
  s.critic_kernel = j.at("critic_kernel");
  s.critic_part = j.at("critic_part");
  s.leaky_slope = j.at("leaky_slope");
  return s;
}

json config_json(const TrainConfig& c) {
  json j;
  j["generator"] = spec_json(c.generator);
  j["critic"] = spec_json(c.critic);
  j["loss"] = {{"lambda", c.loss.lambda},
               {"mu", c.loss.mu},
               {"content", "mse"},
               {"stabilizer", loss::stabilizer_name(c.loss.stabilizer)},
               {"penalty_coefficient", c.loss.penalty_coefficient},
               {"clip_bound", c.loss.clip_bound}};
  j["adam"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
               {"eps", c.adam.eps}};
  j["asgd"] = {{"lr", c.asgd.lr},
               {"decay", c.asgd.decay},
               {"power", c.asgd.power},
               {"average_start", c.asgd.average_start}};
  j["n_critic"] = c.n_critic;
  j["batch_size"] = c.batch_size;
  // Seeds are full 64-bit values; keep them exact.
  j["seed"] = std::to_string(c.seed);
  j["dtype"] = dtype_name(c.dtype);
  return j;
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.generator = spec_from(j.at("generator"));
  c.critic = spec_from(j.at("critic"));
  const auto& l = j.at("loss");
  c.loss.lambda = l.at("lambda");
  c.loss.mu = l.at("mu");
  if (l.at("content").get<std::string>() != "mse") {
    throw CheckpointError("unknown content loss in manifest");
  }
  c.loss.stabilizer = loss::parse_stabilizer(l.at("stabilizer").get<std::string>());
  c.loss.penalty_coefficient = l.at("penalty_coefficient");
  c.loss.clip_bound = l.at("clip_bound");
  const auto& a = j.at("adam");
  c.adam = {a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("eps")};
  const auto& s = j.at("asgd");
  c.asgd = {s.at("lr"), s.at("decay"), s.at("power"), s.at("average_start")};
  c.n_critic = j.at("n_critic");
  c.batch_size = j.at("batch_size");
  c.seed = std::stoull(j.at("seed").get<std::string>());
  c.dtype = parse_dtype(j.at("dtype").get<std::string>());
  return c;
}

std::string file_for(const std::string& prefix, const std::string& name) {
  return prefix + "." + name + ".bin";
}

void save_list(const fs::path& dir, const std::string& prefix, const nn::ParameterList& list,
               json& index) {
  for (const auto& p : list) {
    const auto file = file_for(prefix, p.name);
    write_array((dir / file).string(), p.name, p.tensor);
    index.push_back({{"group", prefix}, {"name", p.name}, {"file", file}});
  }
}

void load_list(const fs::path& dir, const std::string& prefix, const nn::ParameterList& list) {
  for (const auto& p : list) {
    std::string stored;
    const Tensor t = read_array((dir / file_for(prefix, p.name)).string(), &stored);
    if (stored != p.name) {
      throw CheckpointError("array for '" + p.name + "' is labelled '" + stored + "'");
    }
    if (t.shape() != p.tensor.shape() || t.dtype() != p.tensor.dtype()) {
      throw CheckpointError("array '" + p.name + "' has shape " + shape_str(t.shape()) + " " +
                            dtype_name(t.dtype()) + ", expected " +
                            shape_str(p.tensor.shape()) + " " + dtype_name(p.tensor.dtype()));
    }
    Tensor dst = p.tensor;
    dst.assign(t);
  }
}

json scalars_json(const Optimizer& opt) {
  json j = json::object();
  for (const auto& [k, v] : opt.scalars()) j[k] = number(v);
  return j;
}

std::map<std::string, double> scalars_from(const json& j) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = number(v);
  return out;
}

}  // namespace

void write_array(const std::string& path, const std::string& name, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kArrayVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (auto d : t.shape()) put<std::int64_t>(out, d);
  dispatch(t.dtype(), [&]<typename T>() {
    const auto data = t.data<T>();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size_bytes()));
  });
  if (!out) throw CheckpointError("failed writing '" + path + "'");
}

Tensor read_array(const std::string& path, std::string* name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open array file '" + path + "'");
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError("'" + path + "' is not an array file");
  }
  if (take<std::uint32_t>(in, path) != kArrayVersion) {
    throw CheckpointError("'" + path + "' has an unsupported version");
  }
  const auto code = take<std::uint8_t>(in, path);
  if (code > static_cast<std::uint8_t>(DType::f64)) {
    throw CheckpointError("'" + path + "' has an unknown dtype");
  }
  const auto dtype = static_cast<DType>(code);
  const auto len = take<std::uint32_t>(in, path);
  std::string stored(len, '\0');
  if (!in.read(stored.data(), len)) throw CheckpointError("truncated array file '" + path + "'");
  const auto rank = take<std::uint32_t>(in, path);
  if (rank > 8) throw CheckpointError("'" + path + "' has an implausible rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = take<std::int64_t>(in, path);
    if (d < 0) throw CheckpointError("'" + path + "' has a negative extent");
    shape.push_back(d);
  }
  Tensor t = Tensor::empty(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    auto data = t.data<T>();
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size_bytes()))) {
      throw CheckpointError("truncated array file '" + path + "'");
    }
  });
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw CheckpointError("trailing bytes in '" + path + "'");
  }
  if (name) *name = stored;
  return t;
}

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad config: ") + e.what());
  }
}

void save_checkpoint(const TrainState& s, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw CheckpointError("cannot create '" + dir + "': " + ec.message());

  json arrays = json::array();
  save_list(root, "generator", s.generator.parameters(), arrays);
  save_list(root, "critic", s.critic.parameters(), arrays);
  save_list(root, "gen_opt", s.generator_opt.state_tensors(), arrays);
  save_list(root, "critic_opt", s.critic_opt.state_tensors(), arrays);

  json m;
  m["version"] = kManifestVersion;
  m["config"] = config_json(s.config);
  m["iteration"] = s.iteration;
  m["critic_updates"] = s.critic_updates;
  m["generator_updates"] = s.generator_updates;
  m["cursor"] = {{"epoch", s.epoch}, {"position", s.position}};
  m["rng"] = s.rng.state();
  m["gen_opt"] = scalars_json(s.generator_opt);
  m["critic_opt"] = scalars_json(s.critic_opt);
  json history = json::array();
  for (const auto& h : s.history) {
    history.push_back({h.iter, number(h.critic_loss), number(h.gen_loss), number(h.content_loss),
                       number(h.adv_loss), number(h.fcos), number(h.psnr), number(h.ssim)});
  }
  m["history"] = history;
  json events = json::array();
  for (const auto& e : s.events) {
    events.push_back({{"iter", e.iter}, {"kind", e.kind}, {"message", e.message}});
  }
  m["events"] = events;
  m["arrays"] = arrays;

  // Write then rename so a crash never leaves a half-written manifest.
  const auto tmp = root / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write manifest in '" + dir + "'");
    out << m.dump(1) << '\n';
    if (!out) throw CheckpointError("failed writing manifest in '" + dir + "'");
  }
  fs::rename(tmp, root / "manifest.json", ec);
  if (ec) throw CheckpointError("cannot finalize manifest in '" + dir + "': " + ec.message());
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  const auto manifest = root / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw CheckpointError("no checkpoint manifest at '" + manifest.string() + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt manifest '" + manifest.string() + "': " + e.what());
  }
  try {
    if (m.at("version").get<int>() != kManifestVersion) {
      throw CheckpointError("unsupported checkpoint version in '" + dir + "'");
    }
    auto s = std::make_unique<TrainState>(config_from(m.at("config")));
    load_list(root, "generator", s->generator.parameters());
    load_list(root, "critic", s->critic.parameters());
    load_list(root, "gen_opt", s->generator_opt.state_tensors());
    load_list(root, "critic_opt", s->critic_opt.state_tensors());
    s->iteration = m.at("iteration");
    s->critic_updates = m.at("critic_updates");
    s->generator_updates = m.at("generator_updates");
    s->epoch = m.at("cursor").at("epoch");
    s->position = m.at("cursor").at("position");
    s->rng.set_state(m.at("rng").get<std::string>());
    s->generator_opt.load_scalars(scalars_from(m.at("gen_opt")));
    s->critic_opt.load_scalars(scalars_from(m.at("critic_opt")));
    for (const auto& h : m.at("history")) {
      s->history.push_back({h.at(0).get<std::int64_t>(), number(h.at(1)), number(h.at(2)),
                            number(h.at(3)), number(h.at(4)), number(h.at(5)), number(h.at(6)),
                            number(h.at(7))});
    }
    for (const auto& e : m.at("events")) {
      s->events.push_back({e.at("iter").get<std::int64_t>(), e.at("kind").get<std::string>(),
                           e.at("message").get<std::string>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw CheckpointError("incomplete manifest '" + manifest.string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("invalid checkpoint '" + dir + "': " + e.what());
  }
}

}  // namespace hetsr::train
