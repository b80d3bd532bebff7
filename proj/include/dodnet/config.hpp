#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dodnet {

enum class FusionMode { A, B, C };  // A: F + Z, B: F only, C: Z only

std::string to_string(FusionMode m);
FusionMode fusion_from_string(const std::string& s);

using Extent3 = std::array<std::size_t, 3>;  // (D, W, H)

struct ModelConfig {
  // Backbone
  std::vector<std::size_t> stage_channels{8, 16, 32, 64};
  std::size_t blocks_per_stage = 1;
  std::size_t out_channels = 8;  // C2, must equal head_width
  FusionMode fusion = FusionMode::A;
  // Kernel generator
  std::size_t d = 192;
  std::size_t heads = 6;
  std::size_t enc_layers = 3;
  std::size_t dec_layers = 3;
  std::size_t levels = 3;
  std::size_t points = 4;
  std::size_t ffn_hidden = 0;  // 0 means 4·d
  // Dynamic head
  std::size_t head_width = 8;
  std::size_t head_depth = 3;
  std::size_t num_tasks = 7;

  std::size_t ffn() const { return ffn_hidden ? ffn_hidden : 4 * d; }
  std::size_t stages() const { return stage_channels.size(); }
  /// Spatial sizes must be multiples of this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (stages() - 1); }

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double lr_init = 2e-4;
  std::size_t max_steps = 300;  // K of the poly schedule, counted in optimiser steps
  std::size_t batch_size = 2;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  Extent3 patch{16, 48, 48};
  Extent3 window{16, 64, 64};
  std::size_t steps_per_epoch = 10;  // one CSV row block per epoch
  std::size_t val_every = 0;         // epochs between validation passes; 0 = final epoch only
  bool flip = false;                 // random axis flips

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline constexpr int kConfigSchemaVersion = 1;

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Strict readers: unknown keys and wrong types are ConfigErrors. Missing
/// keys keep their defaults.
ModelConfig model_from_json(const nlohmann::json& j);
TrainConfig train_from_json(const nlohmann::json& j);
RunConfig run_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Names of fields that differ; empty when equal.
std::vector<std::string> diff_fields(const ModelConfig& a, const ModelConfig& b);

/// Deep-norm residual scales.
double alpha_encoder(std::size_t enc_layers, std::size_t dec_layers);
double alpha_decoder(std::size_t dec_layers);

}  // namespace dodnet
