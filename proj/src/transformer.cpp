#include "dodnet/transformer.hpp"

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"
#include "dodnet/posenc.hpp"

namespace dodnet {

template <typename T>
FeedForward<T> FeedForward<T>::build(const std::string& prefix, std::size_t d, std::size_t hidden,
                                     ParamStore<T>& store, Rng& rng) {
  FeedForward f;
  init_linear(store, prefix + ".fc1", hidden, d, rng, f.w1, f.b1);
  init_linear(store, prefix + ".fc2", d, hidden, rng, f.w2, f.b2);
  return f;
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

template <typename T>
EncoderLayer<T> EncoderLayer<T>::build(const std::string& prefix, const ModelConfig& cfg,
                                       ParamStore<T>& store, Rng& rng) {
  EncoderLayer l;
  l.attn = MsdaParams<T>::build(prefix + ".attn", cfg.d, cfg.heads, cfg.levels, cfg.points, store, rng);
  l.ln1_g = store.ones(prefix + ".norm1.gamma", {cfg.d});
  l.ln1_b = store.zeros(prefix + ".norm1.beta", {cfg.d});
  l.ffn = FeedForward<T>::build(prefix + ".ffn", cfg.d, cfg.ffn(), store, rng);
  l.ln2_g = store.ones(prefix + ".norm2.gamma", {cfg.d});
  l.ln2_b = store.zeros(prefix + ".norm2.beta", {cfg.d});
  return l;
}

template <typename T>
DecoderLayer<T> DecoderLayer<T>::build(const std::string& prefix, const ModelConfig& cfg,
                                       ParamStore<T>& store, Rng& rng) {
  DecoderLayer l;
  l.self_attn = SelfAttentionParams<T>::build(prefix + ".self_attn", cfg.d, cfg.heads, store, rng);
  l.ln1_g = store.ones(prefix + ".norm1.gamma", {cfg.d});
  l.ln1_b = store.zeros(prefix + ".norm1.beta", {cfg.d});
  l.cross = MsdaParams<T>::build(prefix + ".cross", cfg.d, cfg.heads, cfg.levels, cfg.points, store, rng);
  l.ln2_g = store.ones(prefix + ".norm2.gamma", {cfg.d});
  l.ln2_b = store.zeros(prefix + ".norm2.beta", {cfg.d});
  l.ffn = FeedForward<T>::build(prefix + ".ffn", cfg.d, cfg.ffn(), store, rng);
  l.ln3_g = store.ones(prefix + ".norm3.gamma", {cfg.d});
  l.ln3_b = store.zeros(prefix + ".norm3.beta", {cfg.d});
  return l;
}

template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& z, const Tensor<T>& pos, const Tensor<T>& ref,
                        std::span<const kernels::LevelGrid> levels, const EncoderLayer<T>& p,
                        T alpha) {
  if (z.shape() != pos.shape()) {
    throw DimensionError("encoder_layer: tokens " + shape_str(z.shape()) + " vs positions " +
                         shape_str(pos.shape()));
  }
  const auto a = msda(add(z, pos), ref, z, levels, p.attn);
  const auto z1 = layer_norm(add_scaled(a, z, alpha), p.ln1_g, p.ln1_b);
  return layer_norm(add_scaled(p.ffn(z1), z1, alpha), p.ln2_g, p.ln2_b);
}

template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& t, const Tensor<T>& query_embed, const Tensor<T>& ref,
                        const Tensor<T>& memory, std::span<const kernels::LevelGrid> levels,
                        const DecoderLayer<T>& p, T alpha) {
  if (t.shape() != query_embed.shape()) {
    throw ConfigError("decoder_layer: state " + shape_str(t.shape()) + " does not match query embeddings " +
                      shape_str(query_embed.shape()));
  }
  const auto qk = add(t, query_embed);
  const auto t1 = layer_norm(add_scaled(self_attention(qk, qk, t, p.self_attn), t, alpha), p.ln1_g, p.ln1_b);
  const auto c = msda(add(t1, query_embed), ref, memory, levels, p.cross);
  const auto t2 = layer_norm(add_scaled(c, t1, alpha), p.ln2_g, p.ln2_b);
  return layer_norm(add_scaled(p.ffn(t2), t2, alpha), p.ln3_g, p.ln3_b);
}

template <typename T>
Tensor<T> grid_reference_points(std::span<const kernels::LevelGrid> levels) {
  std::vector<T> ref;
  for (const auto& lv : levels) {
    const auto& g = lv.grid;
    for (std::size_t z = 0; z < g.d; ++z) {
      for (std::size_t y = 0; y < g.w; ++y) {
        for (std::size_t x = 0; x < g.h; ++x) {
          ref.push_back(static_cast<T>((static_cast<double>(z) + 0.5) / static_cast<double>(g.d)));
          ref.push_back(static_cast<T>((static_cast<double>(y) + 0.5) / static_cast<double>(g.w)));
          ref.push_back(static_cast<T>((static_cast<double>(x) + 0.5) / static_cast<double>(g.h)));
        }
      }
    }
  }
  const std::size_t n = ref.size() / 3;
  return Tensor<T>::from_data({n, 3}, std::move(ref));
}

template <typename T>
KernelGenerator<T> KernelGenerator<T>::build(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng) {
  cfg.validate();
  KernelGenerator g;
  g.cfg_ = cfg;
  g.alpha_enc_ = static_cast<T>(alpha_encoder(cfg.enc_layers, cfg.dec_layers));
  g.alpha_dec_ = static_cast<T>(alpha_decoder(cfg.dec_layers));
  const std::size_t first = cfg.stages() - cfg.levels;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    Tensor<T> w, b;
    init_linear(store, "generator.phi" + std::to_string(l), cfg.d, cfg.stage_channels[first + l], rng, w, b);
    g.phi_w_.push_back(w);
    g.phi_b_.push_back(b);
  }
  g.level_embed_ = store.normal("generator.level_embed", {cfg.levels, cfg.d}, rng, 0.02);
  g.query_embed_ = store.normal("generator.query_embed", {cfg.num_tasks, cfg.d}, rng, 0.02);
  g.init_state_ = store.normal("generator.init_state", {cfg.num_tasks, cfg.d}, rng, 0.02);
  init_linear(store, "generator.ref", 3, cfg.d, rng, g.ref_w_, g.ref_b_);
  init_linear(store, "generator.z_adapter", cfg.stage_channels.back(), cfg.d, rng, g.z_w_, g.z_b_);
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    g.enc_.push_back(EncoderLayer<T>::build("generator.enc" + std::to_string(i), cfg, store, rng));
  }
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    g.dec_.push_back(DecoderLayer<T>::build("generator.dec" + std::to_string(i), cfg, store, rng));
  }
  return g;
}

template <typename T>
typename KernelGenerator<T>::Output KernelGenerator<T>::run(const std::vector<Tensor<T>>& pyramid) const {
  if (pyramid.size() < cfg_.levels) {
    throw DimensionError("kernel generator needs " + std::to_string(cfg_.levels) + " pyramid levels, got " +
                         std::to_string(pyramid.size()));
  }
  Output out;
  const std::size_t first = pyramid.size() - cfg_.levels;
  std::vector<Tensor<T>> parts;
  std::vector<double> pos_values;
  std::vector<std::size_t> level_of_token;
  std::size_t start = 0;
  for (std::size_t l = 0; l < cfg_.levels; ++l) {
    const auto& f = pyramid[first + l];
    const auto grid = volume_grid(f.shape());
    const auto proj = conv3d_1x1(f, phi_w_[l], phi_b_[l]);  // [d × grid]
    parts.push_back(transpose(reshape(proj, {cfg_.d, grid.size()})));
    out.levels.push_back({grid, start});
    start += grid.size();
    const auto pe = positional_encoding(grid.d, grid.w, grid.h, cfg_.d);
    pos_values.insert(pos_values.end(), pe.begin(), pe.end());
    level_of_token.insert(level_of_token.end(), grid.size(), l);
  }
  out.tokens = parts.size() == 1 ? parts[0] : concat_rows(parts);
  const auto fixed = Tensor<T>::from_data({start, cfg_.d}, std::vector<T>(pos_values.begin(), pos_values.end()));
  const auto pos = add(fixed, gather_rows(level_embed_, std::span<const std::size_t>(level_of_token)));
  const auto enc_ref = grid_reference_points<T>(out.levels);

  Tensor<T> z = out.tokens;
  for (const auto& layer : enc_) z = encoder_layer(z, pos, enc_ref, out.levels, layer, alpha_enc_);
  out.memory = z;

  const auto dec_ref = sigmoid(linear(query_embed_, ref_w_, ref_b_));
  Tensor<T> t = init_state_;
  for (const auto& layer : dec_) t = decoder_layer(t, query_embed_, dec_ref, z, out.levels, layer, alpha_dec_);
  out.t_out = t;

  // The deepest level shares its grid with the fused CNN feature map.
  const auto& deep = out.levels.back();
  const auto block = slice_rows(z, deep.start, deep.start + deep.grid.size());
  const auto vol = reshape(transpose(block), {cfg_.d, deep.grid.d, deep.grid.w, deep.grid.h});
  out.z = conv3d_1x1(vol, z_w_, z_b_);
  return out;
}

#define DODNET_INSTANTIATE_TRANSFORMER(T)                                                          \
  template struct FeedForward<T>;                                                                  \
  template struct EncoderLayer<T>;                                                                 \
  template struct DecoderLayer<T>;                                                                 \
  template class KernelGenerator<T>;                                                               \
  template Tensor<T> encoder_layer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                   std::span<const kernels::LevelGrid>, const EncoderLayer<T>&, T); \
  template Tensor<T> decoder_layer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                   const Tensor<T>&, std::span<const kernels::LevelGrid>,          \
                                   const DecoderLayer<T>&, T);                                     \
  template Tensor<T> grid_reference_points(std::span<const kernels::LevelGrid>);

DODNET_INSTANTIATE_TRANSFORMER(float)
DODNET_INSTANTIATE_TRANSFORMER(double)

}  // namespace dodnet
