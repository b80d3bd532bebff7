#include "dodnet/volume_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dodnet/error.hpp"

namespace dodnet {

namespace {
constexpr char kMagic[8] = {'M', 'O', 'T', 'S', 'V', 'O', 'L', '1'};
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 31;
}  // namespace

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<std::uint8_t> encode_volume(const VolumeCase& c) {
  const std::size_t n = c.voxels();
  if (c.x.size() != n || c.y.size() != n) throw DimensionError("encode_volume: payload does not match shape");
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  out.reserve(kVolumeHeaderBytes + 5 * n);
  for (auto s : c.shape) put_u32(out, static_cast<std::uint32_t>(s));
  put_u32(out, c.task_id);
  put_u64(out, c.seed);
  for (float v : c.x) put_f32(out, v);
  out.insert(out.end(), c.y.begin(), c.y.end());
  return out;
}

VolumeCase decode_volume(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw FormatError("volume file truncated inside magic", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("bad volume magic", 0);
  if (bytes.size() < kVolumeHeaderBytes) throw FormatError("volume header truncated", bytes.size());
  VolumeCase c;
  std::uint64_t n = 1;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t s = get_u32(bytes.data() + 8 + 4 * a);
    if (s == 0) throw FormatError("zero volume extent", 8 + 4 * a);
    n *= s;
    if (n > kMaxVoxels) throw FormatError("volume dimensions overflow", 8 + 4 * a);
    c.shape[a] = s;
  }
  c.task_id = get_u32(bytes.data() + 20);
  c.seed = get_u64(bytes.data() + 24);
  const std::uint64_t need = kVolumeHeaderBytes + 5 * n;
  if (bytes.size() < need) {
    throw FormatError("volume payload truncated (need " + std::to_string(need) + " bytes)", bytes.size());
  }
  if (bytes.size() > need) throw FormatError("trailing bytes after volume payload", need);
  c.x.resize(n);
  const std::uint8_t* p = bytes.data() + kVolumeHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i) c.x[i] = get_f32(p + 4 * i);
  c.y.assign(p + 4 * n, p + 5 * n);
  return c;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_volume(const VolumeCase& c, const std::string& path) { write_file(path, encode_volume(c)); }

VolumeCase read_volume(const std::string& path) { return decode_volume(read_file(path)); }

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) j.push_back({{"path", e.path}, {"task_id", e.task_id}, {"split", e.split}});
  const std::string text = j.dump(2) + "\n";
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_array()) throw ConfigError("manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("path") || !item.contains("task_id") || !item.contains("split")) {
      throw ConfigError("manifest entries need path, task_id and split");
    }
    for (const auto& [key, _] : item.items()) {
      if (key != "path" && key != "task_id" && key != "split") {
        throw ConfigError("unknown key '" + key + "' in manifest entry");
      }
    }
    out.push_back({item["path"].get<std::string>(), item["task_id"].get<std::uint32_t>(),
                   item["split"].get<std::string>()});
  }
  return out;
}

}  // namespace dodnet
