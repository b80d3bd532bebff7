#pragma once

// Differentiable tensor operations. Every op records a backward rule on the
// tape when grad mode is on and an input requires a gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "dodnet/kernels.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

inline constexpr double kNormEps = 1e-5;

// Dense algebra -------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[n×in] · wᵀ + b, with w[out×in] and optional b[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
/// a + alpha * b
template <typename T>
Tensor<T> add_scaled(const Tensor<T>& a, const Tensor<T>& b, T alpha);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Σ x ⊙ w for a constant weight buffer; handy for scalarising outputs.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights);

// Pointwise ----------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
/// Normalises over the last axis, then applies per-feature gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(kNormEps));

// Layout ---------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
/// out[i] = table[index[i]]; gradients scatter-add back into the table.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> index);

// Volumes (C×D×W×H) ------------------------------------------------------------

/// Cross-correlation with w[Co×Ci×k×k×k] and optional bias b[Co].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t padding);
/// Per-voxel affine map with w[Co×Ci].
template <typename T>
Tensor<T> conv3d_1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        T eps = T(kNormEps));
template <typename T>
Tensor<T> upsample_trilinear2x(const Tensor<T>& x);

/// Samples volume[C×D×W×H] at points[P×3] (voxel units, z-y-x) → [C×P].
template <typename T>
Tensor<T> trilinear_sample(const Tensor<T>& volume, const Tensor<T>& points);

// Attention sampling ----------------------------------------------------------

/// See kernels::msda_forward for layouts. offsets: [Q × H·L·K·3], attn: [Q × H·L·K].
template <typename T>
Tensor<T> msda_sample(const Tensor<T>& value, std::span<const kernels::LevelGrid> levels,
                      const Tensor<T>& ref, const Tensor<T>& offsets, const Tensor<T>& attn,
                      std::size_t heads, std::size_t points);

/// Single-level forward-only counterpart of msda_sample.
template <typename T>
Tensor<T> deform_attn_sample(const Tensor<T>& value, kernels::Grid3 grid, const Tensor<T>& ref,
                             const Tensor<T>& offsets, const Tensor<T>& attn, std::size_t heads,
                             std::size_t points);

// Dynamic head ---------------------------------------------------------------

/// g[width×D×W×H], kernel[d_F] → logits [2×D×W×H].
template <typename T>
Tensor<T> dynamic_head(const Tensor<T>& g, const Tensor<T>& kernel, std::size_t width,
                       std::size_t depth, bool relu_between = true);

kernels::Grid3 volume_grid(const Shape& shape);

}  // namespace dodnet
