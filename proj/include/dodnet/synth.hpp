#pragma once

// Synthetic partially labeled CT-like cases: one ellipsoidal organ with up
// to two spherical tumors, generated in HU and normalised like real scans.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dodnet/config.hpp"
#include "dodnet/tasks.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

struct VolumeCase {
  Extent3 shape{0, 0, 0};  // (D, W, H)
  std::vector<float> x;           // intensities in [-1, 1], H fastest
  std::vector<std::uint8_t> y;    // labels in {0, 1, 2}
  std::uint32_t task_id = 0;
  std::uint64_t seed = 0;

  std::size_t voxels() const { return shape[0] * shape[1] * shape[2]; }
  /// Intensities as a [1×D×W×H] tensor.
  template <typename T>
  Tensor<T> image() const {
    return Tensor<T>::from_data({1, shape[0], shape[1], shape[2]}, std::vector<T>(x.begin(), x.end()));
  }
};

// Intensity model in HU; after preprocess_ct these become 0.3, -0.2, -0.6 and 0.05.
inline constexpr double kOrganHu = 97.5;
inline constexpr double kTumorHu = -65.0;
inline constexpr double kBackgroundHu = -195.0;
inline constexpr double kNoiseHu = 16.25;
inline constexpr double kHuWindow = 325.0;

/// Clamp to [-325, 325] HU, then divide by 325.
float preprocess_ct(double hu);
std::vector<float> preprocess_ct(std::span<const double> hu);

/// Voxel centres (integer coordinates) with Σ((p − c)/r)² ≤ 1.
std::vector<std::uint8_t> rasterize_ellipsoid(const Extent3& shape, const std::array<double, 3>& center,
                                              const std::array<double, 3>& semi_axes);

/// Deterministic in (task, seed, shape). ConfigError if any extent < 16.
VolumeCase generate_case(const TaskDescriptor& task, std::uint64_t seed, const Extent3& shape);

}  // namespace dodnet
