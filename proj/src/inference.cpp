#include "dodnet/inference.hpp"

#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"

namespace dodnet {

std::vector<std::size_t> axis_positions(std::size_t size, std::size_t window, std::size_t stride) {
  if (window > size) throw ConfigError("window larger than padded volume");
  if (stride == 0 || stride > window) throw ConfigError("stride must be in [1, window]");
  std::vector<std::size_t> pos;
  for (std::size_t p = 0;; p += stride) {
    if (p + window >= size) {
      pos.push_back(size - window);
      break;
    }
    pos.push_back(p);
  }
  return pos;
}

WindowPlan plan_windows(const Extent3& volume, const Extent3& window, const Extent3& stride) {
  WindowPlan plan;
  std::array<std::vector<std::size_t>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    if (window[a] == 0) throw ConfigError("window extents must be positive");
    if (stride[a] == 0 || stride[a] > window[a]) {
      throw ConfigError("stride " + std::to_string(stride[a]) + " must be in [1, " + std::to_string(window[a]) + "]");
    }
    plan.padded[a] = std::max(volume[a], window[a]);
    axes[a] = axis_positions(plan.padded[a], window[a], stride[a]);
  }
  for (auto z : axes[0]) {
    for (auto y : axes[1]) {
      for (auto x : axes[2]) plan.origins.push_back({z, y, x});
    }
  }
  return plan;
}

Extent3 half_window(const Extent3& window) {
  return {std::max<std::size_t>(1, window[0] / 2), std::max<std::size_t>(1, window[1] / 2),
          std::max<std::size_t>(1, window[2] / 2)};
}

Probabilities sliding_window(std::span<const float> image, const Extent3& shape, const Extent3& window,
                             const Extent3& stride, std::size_t rows, const WindowFn& fn, float pad_value) {
  if (image.size() != shape[0] * shape[1] * shape[2]) throw DimensionError("sliding_window: image does not match shape");
  const auto plan = plan_windows(shape, window, stride);
  const auto& P = plan.padded;
  const std::size_t np = P[0] * P[1] * P[2];
  std::vector<float> padded(np, pad_value);
  for (std::size_t z = 0; z < shape[0]; ++z) {
    for (std::size_t y = 0; y < shape[1]; ++y) {
      const float* src = image.data() + (z * shape[1] + y) * shape[2];
      std::copy(src, src + shape[2], padded.data() + (z * P[1] + y) * P[2]);
    }
  }
  const std::size_t nw = window[0] * window[1] * window[2];
  std::vector<double> sum(rows * 2 * np, 0.0);
  std::vector<std::uint32_t> count(np, 0);
  std::vector<float> crop(nw);
  // Windows run in a fixed order so the accumulation is reproducible.
  for (const auto& o : plan.origins) {
    for (std::size_t z = 0; z < window[0]; ++z) {
      for (std::size_t y = 0; y < window[1]; ++y) {
        const float* src = padded.data() + ((o[0] + z) * P[1] + o[1] + y) * P[2] + o[2];
        std::copy(src, src + window[2], crop.data() + (z * window[1] + y) * window[2]);
      }
    }
    const auto out = fn(Tensor<float>::from_data({1, window[0], window[1], window[2]}, crop));
    if (out.size() != rows * 2 * nw) throw DimensionError("sliding_window: callback returned wrong size");
    for (std::size_t z = 0; z < window[0]; ++z) {
      for (std::size_t y = 0; y < window[1]; ++y) {
        const std::size_t dst = ((o[0] + z) * P[1] + o[1] + y) * P[2] + o[2];
        const std::size_t src = (z * window[1] + y) * window[2];
        for (std::size_t x = 0; x < window[2]; ++x) ++count[dst + x];
        for (std::size_t r = 0; r < rows * 2; ++r) {
          double* s = sum.data() + r * np + dst;
          const float* v = out.data() + r * nw + src;
          for (std::size_t x = 0; x < window[2]; ++x) s[x] += v[x];
        }
      }
    }
  }
  Probabilities result;
  result.rows = rows;
  result.shape = shape;
  const std::size_t n = image.size();
  result.values.resize(rows * 2 * n);
  for (std::size_t r = 0; r < rows * 2; ++r) {
    for (std::size_t z = 0; z < shape[0]; ++z) {
      for (std::size_t y = 0; y < shape[1]; ++y) {
        for (std::size_t x = 0; x < shape[2]; ++x) {
          const std::size_t pi = (z * P[1] + y) * P[2] + x;
          result.values[r * n + (z * shape[1] + y) * shape[2] + x] =
              static_cast<float>(sum[r * np + pi] / static_cast<double>(count[pi]));
        }
      }
    }
  }
  return result;
}

Probabilities infer_case(const TransDoDNet<float>& model, const VolumeCase& c, const Extent3& window,
                         const Extent3& stride, std::optional<std::size_t> task) {
  const std::size_t m = model.config().spatial_multiple();
  for (auto w : window) {
    if (w % m != 0) {
      throw ConfigError("window extent " + std::to_string(w) + " is not a multiple of " + std::to_string(m));
    }
  }
  if (task && *task >= model.config().num_tasks) {
    throw TaskError("task id " + std::to_string(*task) + " out of range");
  }
  const std::size_t rows = task ? 1 : model.config().num_tasks;
  WindowFn fn = [&](const Tensor<float>& x) {
    NoGradGuard guard;
    const auto f = model.forward(x);
    const auto logits = task ? model.task_logits(f, *task) : model.all_logits(f);
    std::vector<float> p(logits.numel());
    const float* z = logits.ptr();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0f / (1.0f + std::exp(-z[i]));
    return p;
  };
  return sliding_window(c.x, c.shape, window, stride, rows, fn);
}

std::vector<std::uint8_t> to_labels(std::span<const float> organ, std::span<const float> tumor,
                                    const TaskDescriptor& task) {
  std::vector<std::uint8_t> out(organ.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (task.tumor_labeled && tumor[i] > 0.5f) {
      out[i] = 2;
    } else if (task.organ_labeled && organ[i] > 0.5f) {
      out[i] = 1;
    }
  }
  return out;
}

}  // namespace dodnet
