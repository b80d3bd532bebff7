#include "dodnet/checkpoint.hpp"

#include <cstring>

#include "dodnet/error.hpp"
#include "dodnet/volume_io.hpp"

namespace dodnet {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'O', 'D', 'C', 'K', 'P', 'T', '1'};
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& c) {
  json meta;
  meta["model"] = to_json(c.model);
  meta["train"] = to_json(c.train);
  meta["state"] = {{"step", c.state.step}, {"rng_state", c.state.rng_state}, {"cursor", c.state.cursor},
                   {"adam_steps", c.adam_steps}};
  meta["has_moments"] = c.has_moments;
  json params = json::array();
  for (std::size_t i = 0; i < c.names.size(); ++i) params.push_back({{"name", c.names[i]}, {"shape", c.shapes[i]}});
  meta["params"] = params;
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  auto dump = [&](const std::vector<std::vector<float>>& bufs) {
    for (const auto& b : bufs) {
      for (float v : b) put_f32(out, v);
    }
  };
  dump(c.values);
  if (c.has_moments) {
    dump(c.m);
    dump(c.v);
  }
  return out;
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw FormatError("checkpoint header truncated", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = get_u32(bytes.data() + 8);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  const std::uint64_t len = get_u32(bytes.data() + 12);
  if (16 + len > bytes.size()) throw FormatError("checkpoint metadata truncated", bytes.size());
  CheckpointData c;
  json meta;
  try {
    meta = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    c.model = model_from_json(meta.at("model"));
    c.train = train_from_json(meta.at("train"));
    const auto& st = meta.at("state");
    c.state.step = st.at("step").get<std::uint64_t>();
    c.state.rng_state = st.at("rng_state").get<std::uint64_t>();
    c.state.cursor = st.at("cursor").get<std::uint64_t>();
    c.adam_steps = st.at("adam_steps").get<std::uint64_t>();
    c.has_moments = meta.at("has_moments").get<bool>();
    for (const auto& p : meta.at("params")) {
      c.names.push_back(p.at("name").get<std::string>());
      c.shapes.push_back(p.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what(), 16);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid config in checkpoint: ") + e.what(), 16);
  }
  std::uint64_t total = 0;
  for (const auto& s : c.shapes) total += shape_numel(s);
  const std::uint64_t blocks = c.has_moments ? 3 : 1;
  const std::uint64_t need = 16 + len + 4 * total * blocks;
  if (bytes.size() < need) throw FormatError("checkpoint payload truncated", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after checkpoint payload", need);
  const std::uint8_t* p = bytes.data() + 16 + len;
  auto load = [&](std::vector<std::vector<float>>& bufs) {
    for (const auto& s : c.shapes) {
      std::vector<float> b(shape_numel(s));
      for (auto& v : b) {
        v = get_f32(p);
        p += 4;
      }
      bufs.push_back(std::move(b));
    }
  };
  load(c.values);
  if (c.has_moments) {
    load(c.m);
    load(c.v);
  }
  return c;
}

template <typename T>
CheckpointData capture_checkpoint(const TransDoDNet<T>& model, const AdamW<T>* opt, const TrainConfig& train,
                                  const TrainState& state) {
  CheckpointData c;
  c.model = model.config();
  c.train = train;
  c.state = state;
  for (const auto& e : model.params().entries()) {
    c.names.push_back(e.name);
    c.shapes.push_back(e.tensor.shape());
    c.values.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  }
  if (opt) {
    c.has_moments = true;
    c.adam_steps = opt->steps();
    for (const auto& m : opt->first_moments()) c.m.emplace_back(m.begin(), m.end());
    for (const auto& v : opt->second_moments()) c.v.emplace_back(v.begin(), v.end());
  }
  return c;
}

template <typename T>
void restore_checkpoint(const CheckpointData& c, TransDoDNet<T>& model, AdamW<T>* opt) {
  const auto diff = diff_fields(c.model, model.config());
  if (!diff.empty()) {
    std::string msg = "checkpoint is incompatible with the model config; differing fields:";
    for (const auto& f : diff) msg += " " + f;
    throw ConfigError(msg);
  }
  auto& entries = model.params().entries();
  if (entries.size() != c.names.size()) throw ConfigError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != c.names[i] || entries[i].tensor.shape() != c.shapes[i]) {
      throw ConfigError("checkpoint parameter '" + c.names[i] + "' does not match model parameter '" +
                        entries[i].name + "'");
    }
    auto dst = entries[i].tensor.mutable_data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(c.values[i][j]);
  }
  if (opt) {
    if (!c.has_moments) throw ConfigError("checkpoint carries no optimiser state");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& m = opt->first_moments()[i];
      auto& v = opt->second_moments()[i];
      for (std::size_t j = 0; j < m.size(); ++j) {
        m[j] = static_cast<T>(c.m[i][j]);
        v[j] = static_cast<T>(c.v[i][j]);
      }
    }
    opt->set_steps(c.adam_steps);
  }
}

void save_checkpoint(const std::string& path, const CheckpointData& c) { write_file(path, encode_checkpoint(c)); }

CheckpointData load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

template CheckpointData capture_checkpoint(const TransDoDNet<float>&, const AdamW<float>*, const TrainConfig&,
                                           const TrainState&);
template CheckpointData capture_checkpoint(const TransDoDNet<double>&, const AdamW<double>*, const TrainConfig&,
                                           const TrainState&);
template void restore_checkpoint(const CheckpointData&, TransDoDNet<float>&, AdamW<float>*);
template void restore_checkpoint(const CheckpointData&, TransDoDNet<double>&, AdamW<double>*);

}  // namespace dodnet
