#pragma once

#include <cstdint>
#include <span>

#include "dodnet/tensor.hpp"

namespace dodnet {

inline constexpr double kDiceEps = 1e-5;
inline constexpr double kProbClamp = 1e-7;

struct LossParts {
  double dice = 0.0;  // −Σ_k 2Σpy / Σ(p + y + eps) over labeled channels
  double ce = 0.0;    // −Σ_k mean(y log p + (1 − y) log(1 − p)) over labeled channels
  double total() const { return dice + ce; }
};

/// Dice + binary cross-entropy on the (organ, tumor) logits of one task.
/// labels holds {0,1,2} per voxel; organ = label ≥ 1, tumor = label == 2.
/// Unlabeled channels add nothing to the value and receive no gradient.
template <typename T>
Tensor<T> masked_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                      bool organ_labeled, bool tumor_labeled, T eps = T(kDiceEps),
                      LossParts* parts = nullptr);

}  // namespace dodnet
