#pragma once

// Sliding-window inference with uniform averaging of overlapping windows.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dodnet/config.hpp"
#include "dodnet/model.hpp"
#include "dodnet/synth.hpp"
#include "dodnet/tasks.hpp"

namespace dodnet {

/// Window origins along one axis: multiples of stride, the last one clamped
/// so the window ends at the boundary. ConfigError if window > size.
std::vector<std::size_t> axis_positions(std::size_t size, std::size_t window, std::size_t stride);

struct WindowPlan {
  Extent3 padded{0, 0, 0};  // volume extent after padding up to the window
  std::vector<Extent3> origins;
};

/// ConfigError when a stride is zero or exceeds its window. Axes shorter than
/// the window are padded up to it.
WindowPlan plan_windows(const Extent3& volume, const Extent3& window, const Extent3& stride);

/// Probability maps [rows × 2 × D × W × H].
struct Probabilities {
  std::size_t rows = 0;
  Extent3 shape{0, 0, 0};
  std::vector<float> values;

  std::span<const float> channel(std::size_t row, std::size_t ch) const {
    const std::size_t n = shape[0] * shape[1] * shape[2];
    return {values.data() + (2 * row + ch) * n, n};
  }
};

/// Window callback: image [1 × window] → probabilities [rows × 2 × window].
using WindowFn = std::function<std::vector<float>(const Tensor<float>&)>;

/// Runs fn on every window of the (padded) image and averages overlaps.
/// Padding uses `pad_value`, the normalised intensity floor.
Probabilities sliding_window(std::span<const float> image, const Extent3& shape, const Extent3& window,
                             const Extent3& stride, std::size_t rows, const WindowFn& fn,
                             float pad_value = -1.0f);

/// Every task head (task = nullopt) or a single task. ConfigError when the
/// window is not a multiple of the backbone's downsampling factor.
Probabilities infer_case(const TransDoDNet<float>& model, const VolumeCase& c, const Extent3& window,
                         const Extent3& stride, std::optional<std::size_t> task);

/// Default stride: window / 2 per axis (at least 1).
Extent3 half_window(const Extent3& window);

/// Threshold 0.5. Tumor wins over organ; channels the task does not label stay 0.
std::vector<std::uint8_t> to_labels(std::span<const float> organ, std::span<const float> tumor,
                                    const TaskDescriptor& task);

}  // namespace dodnet
