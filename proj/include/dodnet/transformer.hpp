#pragma once

// Transformer kernel generator: tokenises the deepest feature levels, runs
// deformable encoder layers, then decodes learned organ queries.

#include <vector>

#include "dodnet/attention.hpp"
#include "dodnet/config.hpp"
#include "dodnet/kernels.hpp"

namespace dodnet {

template <typename T>
struct FeedForward {
  Tensor<T> w1, b1, w2, b2;
  static FeedForward build(const std::string& prefix, std::size_t d, std::size_t hidden,
                           ParamStore<T>& store, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct EncoderLayer {
  MsdaParams<T> attn;
  Tensor<T> ln1_g, ln1_b;
  FeedForward<T> ffn;
  Tensor<T> ln2_g, ln2_b;

  static EncoderLayer build(const std::string& prefix, const ModelConfig& cfg,
                            ParamStore<T>& store, Rng& rng);
};

template <typename T>
struct DecoderLayer {
  SelfAttentionParams<T> self_attn;
  Tensor<T> ln1_g, ln1_b;
  MsdaParams<T> cross;
  Tensor<T> ln2_g, ln2_b;
  FeedForward<T> ffn;
  Tensor<T> ln3_g, ln3_b;

  static DecoderLayer build(const std::string& prefix, const ModelConfig& cfg,
                            ParamStore<T>& store, Rng& rng);
};

/// z' = LN(MSDA(z + pos, z) + α z);  out = LN(FFN(z') + α z').
/// pos already includes the level embedding; ref are the tokens' own
/// normalised grid centres.
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& z, const Tensor<T>& pos, const Tensor<T>& ref,
                        std::span<const kernels::LevelGrid> levels, const EncoderLayer<T>& p,
                        T alpha);

/// Self-attention (q = k = t + E_q, v = t), cross MSDA into memory with
/// q = t' + E_q, then FFN; each sublayer LN(sublayer + α · residual).
template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& t, const Tensor<T>& query_embed, const Tensor<T>& ref,
                        const Tensor<T>& memory, std::span<const kernels::LevelGrid> levels,
                        const DecoderLayer<T>& p, T alpha);

/// Normalised centre of every token: ((i + 0.5) / extent) per axis.
template <typename T>
Tensor<T> grid_reference_points(std::span<const kernels::LevelGrid> levels);

template <typename T>
class KernelGenerator {
 public:
  struct Output {
    Tensor<T> tokens;  // tokenised input, before the encoder
    Tensor<T> memory;  // encoder output, [N × d]
    Tensor<T> t_out;   // [M × d]
    Tensor<T> z;       // deepest-level memory mapped back to [C_deep × grid]
    std::vector<kernels::LevelGrid> levels;
  };

  static KernelGenerator build(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng);
  Output run(const std::vector<Tensor<T>>& pyramid) const;

  T alpha_enc() const { return alpha_enc_; }
  T alpha_dec() const { return alpha_dec_; }
  const std::vector<EncoderLayer<T>>& encoders() const { return enc_; }
  const std::vector<DecoderLayer<T>>& decoders() const { return dec_; }
  const Tensor<T>& query_embed() const { return query_embed_; }
  const Tensor<T>& init_state() const { return init_state_; }
  const Tensor<T>& ref_w() const { return ref_w_; }
  const Tensor<T>& ref_b() const { return ref_b_; }

 private:
  ModelConfig cfg_;
  T alpha_enc_ = 1, alpha_dec_ = 1;
  std::vector<Tensor<T>> phi_w_, phi_b_;  // per level, [d × C_s]
  Tensor<T> level_embed_;                 // [L × d]
  Tensor<T> query_embed_, init_state_;    // E_q and ϱ, [M × d]
  Tensor<T> ref_w_, ref_b_;               // decoder reference-point head, d → 3
  Tensor<T> z_w_, z_b_;                   // d → C_deep adapter
  std::vector<EncoderLayer<T>> enc_;
  std::vector<DecoderLayer<T>> dec_;
};

}  // namespace dodnet
