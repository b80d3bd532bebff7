#include "dodnet/attention.hpp"

#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"

namespace dodnet {

template <typename T>
void init_linear(ParamStore<T>& store, const std::string& prefix, std::size_t out,
                 std::size_t in, Rng& rng, Tensor<T>& w, Tensor<T>& b) {
  w = store.uniform(prefix + ".weight", {out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  b = store.zeros(prefix + ".bias", {out});
}

template <typename T>
SelfAttentionParams<T> SelfAttentionParams<T>::build(const std::string& prefix, std::size_t d,
                                                     std::size_t heads, ParamStore<T>& store,
                                                     Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("self-attention width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  SelfAttentionParams p;
  p.heads = heads;
  init_linear(store, prefix + ".q", d, d, rng, p.wq, p.bq);
  init_linear(store, prefix + ".k", d, d, rng, p.wk, p.bk);
  init_linear(store, prefix + ".v", d, d, rng, p.wv, p.bv);
  init_linear(store, prefix + ".o", d, d, rng, p.wo, p.bo);
  return p;
}

template <typename T>
Tensor<T> self_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         const SelfAttentionParams<T>& p) {
  const std::size_t d = p.wq.dim(0);
  if (q.rank() != 2 || q.dim(1) != d || k.rank() != 2 || k.dim(1) != d || v.rank() != 2 ||
      v.dim(1) != d || k.dim(0) != v.dim(0)) {
    throw DimensionError("self_attention: inputs must be n×" + std::to_string(d));
  }
  if (d % p.heads != 0) throw ConfigError("self_attention: d not divisible by heads");
  const std::size_t dh = d / p.heads;
  const T inv = T(1) / std::sqrt(static_cast<T>(dh));
  const auto qp = linear(q, p.wq, p.bq);
  const auto kp = linear(k, p.wk, p.bk);
  const auto vp = linear(v, p.wv, p.bv);
  std::vector<Tensor<T>> heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const auto qh = slice_cols(qp, h * dh, (h + 1) * dh);
    const auto kh = slice_cols(kp, h * dh, (h + 1) * dh);
    const auto vh = slice_cols(vp, h * dh, (h + 1) * dh);
    const auto a = softmax(scale(matmul(qh, transpose(kh)), inv), 1);
    heads.push_back(matmul(a, vh));
  }
  return linear(p.heads == 1 ? heads[0] : concat_cols(heads), p.wo, p.bo);
}

template <typename T>
MsdaParams<T> MsdaParams<T>::build(const std::string& prefix, std::size_t d, std::size_t heads,
                                   std::size_t levels, std::size_t points, ParamStore<T>& store,
                                   Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("deformable attention width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (levels == 0) throw ConfigError("deformable attention needs at least one level");
  if (points == 0) throw ConfigError("deformable attention needs at least one sampling point");
  MsdaParams p;
  p.heads = heads;
  p.levels = levels;
  p.points = points;
  const std::size_t s = heads * levels * points;
  init_linear(store, prefix + ".value", d, d, rng, p.value_w, p.value_b);
  // Small offsets break the symmetry between the K points while keeping Δp ≈ 0.
  p.offset_w = store.normal(prefix + ".offset.weight", {3 * s, d}, rng, 0.01);
  p.offset_b = store.zeros(prefix + ".offset.bias", {3 * s});
  // Uniform attention at start.
  p.logit_w = store.zeros(prefix + ".logit.weight", {s, d});
  p.logit_b = store.zeros(prefix + ".logit.bias", {s});
  init_linear(store, prefix + ".out", d, d, rng, p.out_w, p.out_b);
  return p;
}

template <typename T>
Tensor<T> normalize_logits(const Tensor<T>& logits, std::size_t heads, std::size_t samples) {
  const std::size_t q = logits.dim(0);
  if (logits.numel() != q * heads * samples) throw DimensionError("normalize_logits: size mismatch");
  return reshape(softmax(reshape(logits, {q, heads, samples}), 2), {q, heads * samples});
}

template <typename T>
Tensor<T> msda(const Tensor<T>& query, const Tensor<T>& ref, const Tensor<T>& tokens,
               std::span<const kernels::LevelGrid> levels, const MsdaParams<T>& p) {
  if (levels.empty()) throw ConfigError("msda: empty level set");
  if (levels.size() != p.levels) {
    throw ConfigError("msda: parameters expect " + std::to_string(p.levels) + " levels, got " +
                      std::to_string(levels.size()));
  }
  const auto value = linear(tokens, p.value_w, p.value_b);
  const auto offsets = linear(query, p.offset_w, p.offset_b);
  const auto attn = normalize_logits(linear(query, p.logit_w, p.logit_b), p.heads, p.samples());
  const auto sampled = msda_sample(value, levels, ref, offsets, attn, p.heads, p.points);
  return linear(sampled, p.out_w, p.out_b);
}

template <typename T>
Tensor<T> deformable_attention(const Tensor<T>& query, const Tensor<T>& ref,
                               const Tensor<T>& tokens, kernels::Grid3 grid,
                               const MsdaParams<T>& p) {
  if (p.levels != 1) throw ConfigError("deformable_attention: parameters are multi-level");
  const auto value = linear(tokens, p.value_w, p.value_b);
  const auto offsets = linear(query, p.offset_w, p.offset_b);
  const auto attn = normalize_logits(linear(query, p.logit_w, p.logit_b), p.heads, p.samples());
  const auto sampled = deform_attn_sample(value, grid, ref, offsets, attn, p.heads, p.points);
  return linear(sampled, p.out_w, p.out_b);
}

#define DODNET_INSTANTIATE_ATTENTION(T)                                                          \
  template void init_linear(ParamStore<T>&, const std::string&, std::size_t, std::size_t, Rng&, \
                            Tensor<T>&, Tensor<T>&);                                             \
  template struct SelfAttentionParams<T>;                                                        \
  template struct MsdaParams<T>;                                                                 \
  template Tensor<T> self_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                    const SelfAttentionParams<T>&);                              \
  template Tensor<T> normalize_logits(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> msda(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                  \
                          std::span<const kernels::LevelGrid>, const MsdaParams<T>&);            \
  template Tensor<T> deformable_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                          kernels::Grid3, const MsdaParams<T>&);

DODNET_INSTANTIATE_ATTENTION(float)
DODNET_INSTANTIATE_ATTENTION(double)

}  // namespace dodnet
