#pragma once

// Little-endian container:
//   "MOTSVOL1" | u32 D | u32 W | u32 H | u32 task_id | u64 seed
//   | D·W·H float32 intensities | D·W·H uint8 labels

#include <cstdint>
#include <string>
#include <vector>

#include "dodnet/synth.hpp"

namespace dodnet {

inline constexpr std::size_t kVolumeHeaderBytes = 32;

std::vector<std::uint8_t> encode_volume(const VolumeCase& c);
/// FormatError (with byte offset) on bad magic, truncation or implausible dims.
VolumeCase decode_volume(const std::vector<std::uint8_t>& bytes);

void write_volume(const VolumeCase& c, const std::string& path);
VolumeCase read_volume(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::uint32_t task_id = 0;
  std::string split;  // "train" or "val"
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Little-endian scalar helpers shared with the checkpoint codec.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);

}  // namespace dodnet
