#include "dodnet/backbone.hpp"

#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"

namespace dodnet {

namespace {

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <typename T>
Tensor<T> conv_weight(ParamStore<T>& store, const std::string& name, std::size_t out_c,
                      std::size_t in_c, std::size_t k, Rng& rng) {
  return store.normal(name, {out_c, in_c, k, k, k}, rng, he_std(in_c * k * k * k));
}

}  // namespace

template <typename T>
ResBlock<T> ResBlock<T>::build(const std::string& prefix, std::size_t in_c, std::size_t out_c,
                               ParamStore<T>& store, Rng& rng) {
  ResBlock b;
  b.w1 = conv_weight(store, prefix + ".conv1", out_c, in_c, 3, rng);
  b.g1 = store.ones(prefix + ".norm1.gamma", {out_c});
  b.b1 = store.zeros(prefix + ".norm1.beta", {out_c});
  b.w2 = conv_weight(store, prefix + ".conv2", out_c, out_c, 3, rng);
  b.g2 = store.ones(prefix + ".norm2.gamma", {out_c});
  b.b2 = store.zeros(prefix + ".norm2.beta", {out_c});
  if (in_c != out_c) b.proj = store.normal(prefix + ".proj", {out_c, in_c}, rng, he_std(in_c));
  return b;
}

template <typename T>
Tensor<T> ResBlock<T>::operator()(const Tensor<T>& x) const {
  const Tensor<T> none;
  auto h = relu(instance_norm(conv3d(x, w1, none, 1, 1), g1, b1));
  h = instance_norm(conv3d(h, w2, none, 1, 1), g2, b2);
  const Tensor<T> skip = proj.defined() ? conv3d_1x1(x, proj, none) : x;
  return relu(add(h, skip));
}

template <typename T>
Backbone<T> Backbone<T>::build(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng) {
  cfg.validate();
  Backbone bb;
  bb.cfg_ = cfg;
  const auto& ch = cfg.stage_channels;
  for (std::size_t s = 0; s < ch.size(); ++s) {
    const std::string p = "backbone.enc" + std::to_string(s);
    EncoderStage<T> st;
    const std::size_t in_c = s == 0 ? 1 : ch[s - 1];
    st.w = conv_weight(store, p + ".down", ch[s], in_c, 3, rng);
    st.g = store.ones(p + ".down_norm.gamma", {ch[s]});
    st.b = store.zeros(p + ".down_norm.beta", {ch[s]});
    for (std::size_t k = 0; k < cfg.blocks_per_stage; ++k) {
      st.blocks.push_back(ResBlock<T>::build(p + ".block" + std::to_string(k), ch[s], ch[s], store, rng));
    }
    bb.enc_.push_back(std::move(st));
  }
  bb.dec_.resize(ch.size() > 0 ? ch.size() - 1 : 0);
  for (std::size_t s = ch.size() - 1; s-- > 0;) {
    const std::string p = "backbone.dec" + std::to_string(s);
    auto& st = bb.dec_[s];
    st.proj_w = store.normal(p + ".proj.weight", {ch[s], ch[s + 1]}, rng, he_std(ch[s + 1]));
    st.proj_b = store.zeros(p + ".proj.bias", {ch[s]});
    st.refine = ResBlock<T>::build(p + ".block", ch[s], ch[s], store, rng);
  }
  bb.out_w = store.normal("backbone.out.weight", {cfg.out_channels, ch[0]}, rng, he_std(ch[0]));
  bb.out_b = store.zeros("backbone.out.bias", {cfg.out_channels});
  return bb;
}

template <typename T>
std::vector<Tensor<T>> Backbone<T>::encode(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(0) != 1) {
    throw DimensionError("encode: expected a 1×D×W×H volume, got " + shape_str(x.shape()));
  }
  const std::size_t m = cfg_.spatial_multiple();
  for (std::size_t a = 1; a < 4; ++a) {
    if (x.dim(a) % m != 0 || x.dim(a) == 0) {
      throw DimensionError("encode: spatial size " + shape_str(x.shape()) + " is not divisible by " +
                           std::to_string(m));
    }
  }
  const Tensor<T> none;
  std::vector<Tensor<T>> pyramid;
  Tensor<T> h = x;
  for (std::size_t s = 0; s < enc_.size(); ++s) {
    const auto& st = enc_[s];
    h = relu(instance_norm(conv3d(h, st.w, none, s == 0 ? 1 : 2, 1), st.g, st.b));
    for (const auto& blk : st.blocks) h = blk(h);
    pyramid.push_back(h);
  }
  return pyramid;
}

template <typename T>
Tensor<T> Backbone<T>::decode(const std::vector<Tensor<T>>& pyramid, const Tensor<T>& z) const {
  if (pyramid.size() != enc_.size()) throw DimensionError("decode: pyramid depth mismatch");
  const Tensor<T>& deep = pyramid.back();
  Tensor<T> h;
  switch (cfg_.fusion) {
    case FusionMode::A:
      if (!z.defined() || z.shape() != deep.shape()) {
        throw DimensionError("decode: cannot fuse Z " + (z.defined() ? shape_str(z.shape()) : std::string("<none>")) +
                             " with F " + shape_str(deep.shape()));
      }
      h = add(deep, z);
      break;
    case FusionMode::B:
      h = deep;
      break;
    case FusionMode::C:
      if (!z.defined() || z.shape() != deep.shape()) {
        throw DimensionError("decode: Z has shape " + (z.defined() ? shape_str(z.shape()) : std::string("<none>")) +
                             ", expected " + shape_str(deep.shape()));
      }
      h = z;
      break;
  }
  for (std::size_t s = pyramid.size() - 1; s-- > 0;) {
    const auto& st = dec_[s];
    // 1x1x1 projection and trilinear upsampling commute; projecting first is cheaper.
    h = upsample_trilinear2x(conv3d_1x1(h, st.proj_w, st.proj_b));
    h = st.refine(add(h, pyramid[s]));
  }
  return conv3d_1x1(h, out_w, out_b);
}

template struct ResBlock<float>;
template struct ResBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace dodnet
