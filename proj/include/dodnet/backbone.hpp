#pragma once

// Tiny residual CNN encoder-decoder producing the feature pyramid and the
// pre-segmentation map G.

#include <string>
#include <vector>

#include "dodnet/config.hpp"
#include "dodnet/params.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

/// relu(IN(conv(relu(IN(conv x)))) + skip); skip is a 1x1x1 projection when
/// the channel count changes. Convs feeding an instance norm carry no bias.
template <typename T>
struct ResBlock {
  Tensor<T> w1, g1, b1, w2, g2, b2;
  Tensor<T> proj;  // [out × in], undefined when in == out

  static ResBlock build(const std::string& prefix, std::size_t in_c, std::size_t out_c,
                        ParamStore<T>& store, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct EncoderStage {
  Tensor<T> w, g, b;  // stem (stage 0) or stride-2 downsampling conv
  std::vector<ResBlock<T>> blocks;
};

template <typename T>
struct DecoderStage {
  Tensor<T> proj_w, proj_b;  // 1x1x1 channel halving on the upsampled path
  ResBlock<T> refine;
};

template <typename T>
class Backbone {
 public:
  static Backbone build(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng);

  /// x: [1×D×W×H] → F_0..F_{S-1}, F_s: [C_s × D/2^s × W/2^s × H/2^s].
  std::vector<Tensor<T>> encode(const Tensor<T>& x) const;

  /// Fuses the deepest level with z per the fusion mode and decodes to
  /// G: [C2×D×W×H]. z may be undefined in mode B.
  Tensor<T> decode(const std::vector<Tensor<T>>& pyramid, const Tensor<T>& z) const;

  const ModelConfig& config() const { return cfg_; }
  std::vector<EncoderStage<T>>& encoder_stages() { return enc_; }

 private:
  ModelConfig cfg_;
  std::vector<EncoderStage<T>> enc_;
  std::vector<DecoderStage<T>> dec_;  // dec_[s] merges into level s
  Tensor<T> out_w, out_b;
};

}  // namespace dodnet
