#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dodnet/config.hpp"

namespace dodnet {

/// 2|A∩B| / (|A| + |B|) over non-zero entries; 1.0 when both are empty.
double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Mask voxels with at least one 6-neighbour outside the mask or the volume.
std::vector<std::array<int, 3>> boundary_voxels(std::span<const std::uint8_t> mask, const Extent3& shape);

/// Symmetric Hausdorff distance between boundary sets, in voxels.
/// UndefinedMetricError if either mask is empty.
double hausdorff(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, const Extent3& shape);

}  // namespace dodnet
