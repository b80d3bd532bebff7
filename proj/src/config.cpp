#include "dodnet/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "dodnet/error.hpp"

namespace dodnet {

using nlohmann::json;

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::A: return "A";
    case FusionMode::B: return "B";
    case FusionMode::C: return "C";
  }
  return "?";
}

FusionMode fusion_from_string(const std::string& s) {
  if (s == "A") return FusionMode::A;
  if (s == "B") return FusionMode::B;
  if (s == "C") return FusionMode::C;
  throw ConfigError("fusion must be one of A, B, C (got '" + s + "')");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (stage_channels.empty()) fail("stage_channels must not be empty");
  for (auto c : stage_channels) {
    if (c == 0) fail("stage_channels entries must be positive");
  }
  if (stages() > 16) fail("too many stages");
  if (d == 0 || heads == 0) fail("d and heads must be positive");
  if (d % heads != 0) fail("d (" + std::to_string(d) + ") must be divisible by heads (" + std::to_string(heads) + ")");
  if (d % 6 != 0) fail("d (" + std::to_string(d) + ") must be divisible by 6 for the positional encoding");
  if (dec_layers == 0) fail("dec_layers must be >= 1");
  if (levels == 0) fail("levels must be >= 1");
  if (levels > stages()) fail("levels (" + std::to_string(levels) + ") exceeds stage count (" + std::to_string(stages()) + ")");
  if (points == 0) fail("points must be >= 1");
  if (head_width == 0) fail("head_width must be >= 1");
  if (head_depth < 2) fail("head_depth must be >= 2");
  if (out_channels != head_width) {
    fail("out_channels (" + std::to_string(out_channels) + ") must equal head_width (" + std::to_string(head_width) + ")");
  }
  if (num_tasks == 0) fail("num_tasks must be >= 1");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(lr_init > 0) || !std::isfinite(lr_init)) fail("lr_init must be positive");
  if (max_steps == 0) fail("max_steps must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  for (auto v : patch) {
    if (v == 0) fail("patch extents must be positive");
  }
  for (auto v : window) {
    if (v == 0) fail("window extents must be positive");
  }
  if (steps_per_epoch == 0) fail("steps_per_epoch must be >= 1");
}

json to_json(const ModelConfig& c) {
  return json{{"stage_channels", c.stage_channels}, {"blocks_per_stage", c.blocks_per_stage},
              {"out_channels", c.out_channels},     {"fusion", to_string(c.fusion)},
              {"d", c.d},                           {"heads", c.heads},
              {"enc_layers", c.enc_layers},         {"dec_layers", c.dec_layers},
              {"levels", c.levels},                 {"points", c.points},
              {"ffn_hidden", c.ffn_hidden},         {"head_width", c.head_width},
              {"head_depth", c.head_depth},         {"num_tasks", c.num_tasks}};
}

json to_json(const TrainConfig& c) {
  return json{{"lr_init", c.lr_init},
              {"max_steps", c.max_steps},
              {"batch_size", c.batch_size},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"patch", c.patch},
              {"window", c.window},
              {"steps_per_epoch", c.steps_per_epoch},
              {"val_every", c.val_every},
              {"flip", c.flip}};
}

json to_json(const RunConfig& c) {
  return json{{"schema_version", kConfigSchemaVersion},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)}};
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_integral_v<V> && !std::is_same_v<V, bool>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
        throw ConfigError(where + "." + key + " must be a non-negative integer");
      }
    }
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
    }
    out = v.get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

ModelConfig model_from_json(const json& j) {
  check_keys(j,
             {"stage_channels", "blocks_per_stage", "out_channels", "fusion", "d", "heads",
              "enc_layers", "dec_layers", "levels", "points", "ffn_hidden", "head_width",
              "head_depth", "num_tasks"},
             "model");
  ModelConfig c;
  read(j, "stage_channels", c.stage_channels, "model");
  read(j, "blocks_per_stage", c.blocks_per_stage, "model");
  read(j, "out_channels", c.out_channels, "model");
  if (j.contains("fusion")) {
    if (!j["fusion"].is_string()) throw ConfigError("model.fusion must be a string");
    c.fusion = fusion_from_string(j["fusion"].get<std::string>());
  }
  read(j, "d", c.d, "model");
  read(j, "heads", c.heads, "model");
  read(j, "enc_layers", c.enc_layers, "model");
  read(j, "dec_layers", c.dec_layers, "model");
  read(j, "levels", c.levels, "model");
  read(j, "points", c.points, "model");
  read(j, "ffn_hidden", c.ffn_hidden, "model");
  read(j, "head_width", c.head_width, "model");
  read(j, "head_depth", c.head_depth, "model");
  read(j, "num_tasks", c.num_tasks, "model");
  c.validate();
  return c;
}

TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"lr_init", "max_steps", "batch_size", "weight_decay", "seed", "patch", "window",
              "steps_per_epoch", "val_every", "flip"},
             "train");
  TrainConfig c;
  read(j, "lr_init", c.lr_init, "train");
  read(j, "max_steps", c.max_steps, "train");
  read(j, "batch_size", c.batch_size, "train");
  read(j, "weight_decay", c.weight_decay, "train");
  read(j, "seed", c.seed, "train");
  read(j, "patch", c.patch, "train");
  read(j, "window", c.window, "train");
  read(j, "steps_per_epoch", c.steps_per_epoch, "train");
  read(j, "val_every", c.val_every, "train");
  read(j, "flip", c.flip, "train");
  c.validate();
  return c;
}

RunConfig run_from_json(const json& j) {
  check_keys(j, {"schema_version", "model", "train"}, "config");
  if (!j.contains("schema_version")) throw ConfigError("config is missing schema_version");
  if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  RunConfig c;
  if (j.contains("model")) c.model = model_from_json(j["model"]);
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_from_json(j);
}

std::vector<std::string> diff_fields(const ModelConfig& a, const ModelConfig& b) {
  const json ja = to_json(a), jb = to_json(b);
  std::vector<std::string> out;
  for (const auto& [key, value] : ja.items()) {
    if (jb[key] != value) out.push_back(key);
  }
  return out;
}

double alpha_encoder(std::size_t enc_layers, std::size_t dec_layers) {
  const double n = static_cast<double>(enc_layers), m = static_cast<double>(dec_layers);
  return 0.81 * std::pow(n * n * n * n * m, 1.0 / 16.0);
}

double alpha_decoder(std::size_t dec_layers) {
  return std::pow(3.0 * static_cast<double>(dec_layers), 0.25);
}

}  // namespace dodnet
