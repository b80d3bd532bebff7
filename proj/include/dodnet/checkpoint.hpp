#pragma once

// Checkpoint container (little-endian):
//   "DODCKPT1" | u32 version | u32 metadata length | metadata JSON
//   | float32 parameters in manifest order | [float32 first moments | float32 second moments]
// The metadata holds the model and train configs, the training state and the
// parameter manifest (names and shapes).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dodnet/config.hpp"
#include "dodnet/model.hpp"
#include "dodnet/optim.hpp"

namespace dodnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t rng_state = 0;
  std::uint64_t cursor = 0;  // round-robin position over tasks
  bool operator==(const TrainState&) const = default;
};

struct CheckpointData {
  ModelConfig model;
  TrainConfig train;
  TrainState state;
  std::uint64_t adam_steps = 0;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<float>> values;
  bool has_moments = false;
  std::vector<std::vector<float>> m, v;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& c);
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename T>
CheckpointData capture_checkpoint(const TransDoDNet<T>& model, const AdamW<T>* opt, const TrainConfig& train,
                                  const TrainState& state);

/// Loads parameters (and moments when `opt` is given). ConfigError listing
/// differing fields when the stored model config does not match.
template <typename T>
void restore_checkpoint(const CheckpointData& c, TransDoDNet<T>& model, AdamW<T>* opt);

void save_checkpoint(const std::string& path, const CheckpointData& c);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace dodnet
