#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "hetsr/trainer.hpp"

namespace hetsr::train {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint is a directory holding manifest.json (config, counters, RNG
// state, data cursor, optimizer scalars, history, events) and one .bin file
// per array: magic "HSRT", u32 version, u8 dtype, u32 name length, name,
// u32 rank, i64 extents, then little-endian values.
void save_checkpoint(const TrainState& state, const std::string& dir);
std::unique_ptr<TrainState> load_checkpoint(const std::string& dir);

// Training configuration as a JSON document, and back. Unknown or missing
// keys are errors when reading.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

// Single array files, exposed for tools and tests.
void write_array(const std::string& path, const std::string& name, const Tensor& t);
Tensor read_array(const std::string& path, std::string* name = nullptr);

}  // namespace hetsr::train
