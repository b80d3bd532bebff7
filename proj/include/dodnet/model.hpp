#pragma once

#include <cstdint>
#include <vector>

#include "dodnet/backbone.hpp"
#include "dodnet/dynamic_head.hpp"
#include "dodnet/transformer.hpp"

namespace dodnet {

struct ParamCounts {
  std::size_t backbone = 0;
  std::size_t generator = 0;  // Transformer, embeddings and Z adapter
  std::size_t filters = 0;    // filter-prediction MLP
  std::size_t dynamic = 0;    // d_F per task (generated, not stored)
  std::size_t total = 0;      // stored parameters
};

/// CNN encoder-decoder + Transformer kernel generator + dynamic heads.
template <typename T>
class TransDoDNet {
 public:
  struct Options {
    bool zero_transformer_volume = false;  // replace Z by zeros before fusion
  };

  struct Forward {
    std::vector<Tensor<T>> pyramid;
    typename KernelGenerator<T>::Output gen;
    Tensor<T> g;      // [C2×D×W×H]
    Tensor<T> omega;  // [M×d_F]
  };

  TransDoDNet(const ModelConfig& cfg, std::uint64_t seed);
  TransDoDNet(const TransDoDNet&) = delete;
  TransDoDNet& operator=(const TransDoDNet&) = delete;
  TransDoDNet(TransDoDNet&&) = default;

  /// x: [1×D×W×H].
  Forward forward(const Tensor<T>& x, const Options& opt) const;
  Forward forward(const Tensor<T>& x) const { return forward(x, Options{}); }

  Tensor<T> task_logits(const Forward& f, std::size_t task) const;
  Tensor<T> all_logits(const Forward& f) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const KernelGenerator<T>& generator() const { return generator_; }
  const FilterHead<T>& filter_head() const { return filters_; }
  ParamCounts counts() const;

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Backbone<T> backbone_;
  KernelGenerator<T> generator_;
  FilterHead<T> filters_;
};

/// Copies values by parameter name; ConfigError on missing names or shape mismatches.
template <typename Dst, typename Src>
void copy_params(const ParamStore<Src>& src, ParamStore<Dst>& dst);

}  // namespace dodnet
