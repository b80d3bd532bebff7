#include "dodnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dodnet/error.hpp"

namespace dodnet {

double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("dice: mask sizes differ (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(gt.size()) + ")");
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::array<int, 3>> boundary_voxels(std::span<const std::uint8_t> mask, const Extent3& shape) {
  const int D = static_cast<int>(shape[0]), W = static_cast<int>(shape[1]), H = static_cast<int>(shape[2]);
  if (mask.size() != shape[0] * shape[1] * shape[2]) throw DimensionError("boundary: mask does not match shape");
  auto at = [&](int z, int y, int x) {
    if (z < 0 || y < 0 || x < 0 || z >= D || y >= W || x >= H) return false;
    return mask[(static_cast<std::size_t>(z) * W + y) * H + x] != 0;
  };
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z < D; ++z) {
    for (int y = 0; y < W; ++y) {
      for (int x = 0; x < H; ++x) {
        if (!at(z, y, x)) continue;
        if (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) || !at(z, y + 1, x) ||
            !at(z, y, x - 1) || !at(z, y, x + 1)) {
          out.push_back({z, y, x});
        }
      }
    }
  }
  return out;
}

namespace {

double directed(const std::vector<std::array<int, 3>>& a, const std::vector<std::array<int, 3>>& b) {
  long long worst = 0;
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(max : worst) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    long long best = std::numeric_limits<long long>::max();
    for (const auto& q : b) {
      const long long dz = a[i][0] - q[0], dy = a[i][1] - q[1], dx = a[i][2] - q[2];
      best = std::min(best, dz * dz + dy * dy + dx * dx);
      if (best == 0) break;
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(static_cast<double>(worst));
}

}  // namespace

double hausdorff(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, const Extent3& shape) {
  if (pred.size() != gt.size()) throw DimensionError("hausdorff: mask sizes differ");
  const auto a = boundary_voxels(pred, shape);
  const auto b = boundary_voxels(gt, shape);
  if (a.empty() || b.empty()) throw UndefinedMetricError("hausdorff distance is undefined for an empty mask");
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace dodnet
