#include "dodnet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/rng.hpp"

namespace dodnet {

float preprocess_ct(double hu) {
  return static_cast<float>(std::clamp(hu, -kHuWindow, kHuWindow) / kHuWindow);
}

std::vector<float> preprocess_ct(std::span<const double> hu) {
  std::vector<float> out(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i) out[i] = preprocess_ct(hu[i]);
  return out;
}

std::vector<std::uint8_t> rasterize_ellipsoid(const Extent3& shape, const std::array<double, 3>& center,
                                              const std::array<double, 3>& semi_axes) {
  std::vector<std::uint8_t> mask(shape[0] * shape[1] * shape[2], 0);
  std::size_t i = 0;
  for (std::size_t z = 0; z < shape[0]; ++z) {
    const double dz = (static_cast<double>(z) - center[0]) / semi_axes[0];
    for (std::size_t y = 0; y < shape[1]; ++y) {
      const double dy = (static_cast<double>(y) - center[1]) / semi_axes[1];
      for (std::size_t x = 0; x < shape[2]; ++x, ++i) {
        const double dx = (static_cast<double>(x) - center[2]) / semi_axes[2];
        mask[i] = dz * dz + dy * dy + dx * dx <= 1.0;
      }
    }
  }
  return mask;
}

VolumeCase generate_case(const TaskDescriptor& task, std::uint64_t seed, const Extent3& shape) {
  for (auto s : shape) {
    if (s < 16) throw ConfigError("synthetic cases need every extent >= 16");
  }
  Rng rng(mix_seed(seed, task.id + 1));
  std::array<double, 3> center{}, axes{};
  for (int a = 0; a < 3; ++a) {
    const double ext = static_cast<double>(shape[a]);
    center[a] = rng.uniform(0.4, 0.6) * (ext - 1.0);
    axes[a] = rng.uniform(0.22, 0.32) * ext;
  }
  const auto organ = rasterize_ellipsoid(shape, center, axes);

  std::vector<std::uint8_t> tumor(organ.size(), 0);
  const std::size_t tumors = task.tumor_labeled ? 1 + rng.below(2) : 0;
  const double min_axis = *std::min_element(axes.begin(), axes.end());
  for (std::size_t t = 0; t < tumors; ++t) {
    const double r = rng.uniform(0.45, 0.65) * min_axis;
    // Uniform direction in the unit ball, shrunk so the sphere stays mostly inside.
    std::array<double, 3> u{};
    double norm2 = 2.0;
    while (norm2 > 1.0) {
      for (auto& c : u) c = rng.uniform(-1.0, 1.0);
      norm2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    }
    const double shrink = 0.6 * std::max(0.0, 1.0 - r / min_axis);
    std::array<double, 3> c{};
    for (int a = 0; a < 3; ++a) c[a] = center[a] + shrink * u[a] * axes[a];
    const auto sphere = rasterize_ellipsoid(shape, c, {r, r, r});
    for (std::size_t i = 0; i < tumor.size(); ++i) tumor[i] |= sphere[i] & organ[i];
  }

  VolumeCase vc;
  vc.shape = shape;
  vc.task_id = static_cast<std::uint32_t>(task.id);
  vc.seed = seed;
  const std::size_t n = organ.size();
  std::vector<double> hu(n);
  vc.y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double base = tumor[i] ? kTumorHu : organ[i] ? kOrganHu : kBackgroundHu;
    hu[i] = base + rng.normal(0.0, kNoiseHu);
    if (tumor[i] && task.tumor_labeled) {
      vc.y[i] = 2;
    } else if (organ[i] && task.organ_labeled) {
      vc.y[i] = 1;
    }
  }
  vc.x = preprocess_ct(hu);
  return vc;
}

}  // namespace dodnet
