#pragma once

// Dot-product self-attention and (multi-scale) deformable attention blocks.

#include <span>
#include <string>

#include "dodnet/kernels.hpp"
#include "dodnet/params.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

/// PyTorch-style default: U(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
template <typename T>
void init_linear(ParamStore<T>& store, const std::string& prefix, std::size_t out,
                 std::size_t in, Rng& rng, Tensor<T>& w, Tensor<T>& b);

template <typename T>
struct SelfAttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t heads = 1;

  static SelfAttentionParams build(const std::string& prefix, std::size_t d, std::size_t heads,
                                   ParamStore<T>& store, Rng& rng);
};

/// Per head: softmax(q_h k_hᵀ / sqrt(d/h)) v_h; heads concatenated, then ρo.
template <typename T>
Tensor<T> self_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         const SelfAttentionParams<T>& p);

template <typename T>
struct MsdaParams {
  Tensor<T> value_w, value_b;  // ρs, shared by every level
  Tensor<T> offset_w, offset_b;  // d → heads·levels·points·3
  Tensor<T> logit_w, logit_b;    // d → heads·levels·points
  Tensor<T> out_w, out_b;        // ρo
  std::size_t heads = 1, levels = 1, points = 1;

  static MsdaParams build(const std::string& prefix, std::size_t d, std::size_t heads,
                          std::size_t levels, std::size_t points, ParamStore<T>& store, Rng& rng);
  std::size_t samples() const { return levels * points; }
};

/// Softmax of logits [Q × heads·samples] jointly over the samples of each (query, head).
template <typename T>
Tensor<T> normalize_logits(const Tensor<T>& logits, std::size_t heads, std::size_t samples);

/// query [Q×d], ref [Q×3] normalised (z,y,x), tokens [N×d] holding every
/// level back to back as described by `levels`.
template <typename T>
Tensor<T> msda(const Tensor<T>& query, const Tensor<T>& ref, const Tensor<T>& tokens,
               std::span<const kernels::LevelGrid> levels, const MsdaParams<T>& p);

/// Single-scale deformable attention over one token grid. Forward only;
/// p.levels must be 1.
template <typename T>
Tensor<T> deformable_attention(const Tensor<T>& query, const Tensor<T>& ref,
                               const Tensor<T>& tokens, kernels::Grid3 grid,
                               const MsdaParams<T>& p);

}  // namespace dodnet
