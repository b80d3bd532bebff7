#include "dodnet/objective.hpp"

#include <cmath>
#include <vector>

#include "dodnet/error.hpp"

namespace dodnet {

namespace {

inline bool target(std::uint8_t label, std::size_t channel) {
  return channel == 0 ? label >= 1 : label == 2;
}

}  // namespace

template <typename T>
Tensor<T> masked_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                      bool organ_labeled, bool tumor_labeled, T eps, LossParts* parts) {
  if (logits.rank() != 4 || logits.dim(0) != 2) {
    throw DimensionError("masked_loss: logits must be 2×D×W×H, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.numel() / 2;
  if (labels.size() != n) {
    throw DimensionError("masked_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " voxels");
  }
  if (!(eps > T(0))) throw ConfigError("masked_loss: eps must be positive");
  const T* z = logits.ptr();
  for (std::size_t i = 0; i < 2 * n; ++i) {
    if (!std::isfinite(z[i])) throw NumericError("masked_loss: non-finite logit at index " + std::to_string(i));
  }

  const bool labeled[2] = {organ_labeled, tumor_labeled};
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;
  const double inv_n = 1.0 / static_cast<double>(n);
  // Per-channel sums needed by the backward rule.
  double s_py[2] = {0, 0}, s_den[2] = {0, 0};
  LossParts lp;
  std::vector<double> prob(2 * n);
  for (std::size_t k = 0; k < 2; ++k) {
    if (!labeled[k]) continue;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(z[k * n + i])));
      const double p = std::min(std::max(s, lo), hi);
      prob[k * n + i] = p;
      const double y = target(labels[i], k) ? 1.0 : 0.0;
      s_py[k] += p * y;
      s_den[k] += p + y + static_cast<double>(eps);
      ll += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    lp.dice -= 2.0 * s_py[k] / s_den[k];
    lp.ce -= ll * inv_n;
  }
  if (parts) *parts = lp;
  const T value = static_cast<T>(lp.total());

  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return make_result<T>(
      "masked_loss", {1}, {value}, {logits},
      [n, inv_n, lo, hi, lab = std::move(lab), prob = std::move(prob),
       s_py0 = s_py[0], s_py1 = s_py[1], s_den0 = s_den[0], s_den1 = s_den[1],
       organ_labeled, tumor_labeled](Node<T>& self) {
        auto& in = self.inputs[0];
        if (!in->requires_grad) return;
        T* dz = in->grad_buffer();
        const double g = static_cast<double>(self.grad[0]);
        const bool labeled[2] = {organ_labeled, tumor_labeled};
        const double spy[2] = {s_py0, s_py1}, sden[2] = {s_den0, s_den1};
        for (std::size_t k = 0; k < 2; ++k) {
          if (!labeled[k]) continue;
          const double c = 2.0 * spy[k] / (sden[k] * sden[k]);
          for (std::size_t i = 0; i < n; ++i) {
            const double p = prob[k * n + i];
            // The clamp has zero slope where it is active.
            if (p <= lo || p >= hi) continue;
            const double y = target(lab[i], k) ? 1.0 : 0.0;
            const double dl_dp = -(2.0 * y / sden[k] - c) - inv_n * (y / p - (1.0 - y) / (1.0 - p));
            dz[k * n + i] += static_cast<T>(g * dl_dp * p * (1.0 - p));
          }
        }
      });
}

template Tensor<float> masked_loss(const Tensor<float>&, std::span<const std::uint8_t>, bool, bool,
                                   float, LossParts*);
template Tensor<double> masked_loss(const Tensor<double>&, std::span<const std::uint8_t>, bool, bool,
                                    double, LossParts*);

}  // namespace dodnet
