#pragma once

// Filter prediction and the dynamic segmentation head.
//
// Packed kernel layout for one task (length d_F): layer-major; within a layer
// the weight matrix (out × in, row-major) followed by the bias. Layers
// 1..depth-1 map width → width, the last maps width → 2 (organ, tumor).

#include <cstddef>
#include <span>
#include <vector>

#include "dodnet/params.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

/// (w² + w)(depth − 1) + (2w + 2). ConfigError when depth < 2 or width < 1.
std::size_t dynamic_param_count(std::size_t width, std::size_t depth);

template <typename T>
struct HeadLayer {
  std::size_t out = 0, in = 0;
  std::vector<T> weight;  // out × in
  std::vector<T> bias;    // out
};

/// FormatError when omega.size() != d_F.
template <typename T>
std::vector<HeadLayer<T>> slice_kernels(std::span<const T> omega, std::size_t width, std::size_t depth);
template <typename T>
std::vector<T> pack_kernels(const std::vector<HeadLayer<T>>& layers);

/// ω = fc2(relu(fc1(t))), applied row by row.
template <typename T>
struct FilterHead {
  Tensor<T> w1, b1, w2, b2;
  static FilterHead build(std::size_t d, std::size_t d_f, ParamStore<T>& store, Rng& rng);
};

/// t_out [M × d] → ω [M × d_F].
template <typename T>
Tensor<T> predict_filters(const Tensor<T>& t_out, const FilterHead<T>& head);

/// Logits [2×D×W×H] of task m; other tasks are not evaluated. TaskError if m ≥ M.
template <typename T>
Tensor<T> dynamic_forward(const Tensor<T>& g, const Tensor<T>& omega, std::size_t task,
                          std::size_t width, std::size_t depth);

/// Every task head in one pass, [M×2×D×W×H]; row m equals dynamic_forward(.., m).
template <typename T>
Tensor<T> dynamic_forward_all(const Tensor<T>& g, const Tensor<T>& omega, std::size_t width,
                              std::size_t depth);

}  // namespace dodnet
