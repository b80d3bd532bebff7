#include "dodnet/model.hpp"

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"

namespace dodnet {

namespace {

template <typename T>
Backbone<T> build_backbone(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng) {
  cfg.validate();
  return Backbone<T>::build(cfg, store, rng);
}

}  // namespace

// Members are initialised in declaration order, so every module draws from
// the same stream in a fixed sequence.
template <typename T>
TransDoDNet<T>::TransDoDNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(mix_seed(seed, 0x6d6f64656cull));
  backbone_ = build_backbone(cfg_, store_, rng);
  generator_ = KernelGenerator<T>::build(cfg_, store_, rng);
  filters_ = FilterHead<T>::build(cfg_.d, dynamic_param_count(cfg_.head_width, cfg_.head_depth), store_, rng);
}

template <typename T>
typename TransDoDNet<T>::Forward TransDoDNet<T>::forward(const Tensor<T>& x, const Options& opt) const {
  Forward f;
  f.pyramid = backbone_.encode(x);
  f.gen = generator_.run(f.pyramid);
  Tensor<T> z = f.gen.z;
  if (opt.zero_transformer_volume) z = Tensor<T>::zeros(z.shape());
  f.g = backbone_.decode(f.pyramid, z);
  f.omega = predict_filters(f.gen.t_out, filters_);
  return f;
}

template <typename T>
Tensor<T> TransDoDNet<T>::task_logits(const Forward& f, std::size_t task) const {
  if (task >= cfg_.num_tasks) {
    throw TaskError("task id " + std::to_string(task) + " out of range (M = " + std::to_string(cfg_.num_tasks) + ")");
  }
  return dynamic_forward(f.g, f.omega, task, cfg_.head_width, cfg_.head_depth);
}

template <typename T>
Tensor<T> TransDoDNet<T>::all_logits(const Forward& f) const {
  return dynamic_forward_all(f.g, f.omega, cfg_.head_width, cfg_.head_depth);
}

template <typename T>
ParamCounts TransDoDNet<T>::counts() const {
  ParamCounts c;
  c.backbone = store_.count("backbone.");
  c.generator = store_.count("generator.");
  c.filters = store_.count("filters.");
  c.dynamic = dynamic_param_count(cfg_.head_width, cfg_.head_depth);
  c.total = store_.total();
  return c;
}

template <typename Dst, typename Src>
void copy_params(const ParamStore<Src>& src, ParamStore<Dst>& dst) {
  for (auto& e : dst.entries()) {
    if (!src.contains(e.name)) throw ConfigError("parameter '" + e.name + "' missing from source");
    const auto& s = src.get(e.name);
    if (s.shape() != e.tensor.shape()) {
      throw ConfigError("parameter '" + e.name + "' has shape " + shape_str(s.shape()) + ", expected " +
                        shape_str(e.tensor.shape()));
    }
    auto out = e.tensor.mutable_data();
    const auto in = s.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Dst>(in[i]);
  }
}

template class TransDoDNet<float>;
template class TransDoDNet<double>;
template void copy_params(const ParamStore<float>&, ParamStore<float>&);
template void copy_params(const ParamStore<float>&, ParamStore<double>&);
template void copy_params(const ParamStore<double>&, ParamStore<float>&);
template void copy_params(const ParamStore<double>&, ParamStore<double>&);

}  // namespace dodnet
