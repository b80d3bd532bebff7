#include "dodnet/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "dodnet/attention.hpp"
#include "dodnet/dynamic_head.hpp"
#include "dodnet/error.hpp"
#include "dodnet/model.hpp"
#include "dodnet/objective.hpp"
#include "dodnet/ops.hpp"
#include "dodnet/transformer.hpp"

namespace dodnet {

namespace {

using Td = Tensor<double>;
using Builder = std::function<Td()>;

Td randn(Shape shape, Rng& rng, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return Td::from_data(std::move(shape), std::move(v));
}

Td uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Td::from_data(std::move(shape), std::move(v));
}

// Moves freshly initialised parameters away from their special starting
// values (zero biases, zero logit heads) so every path carries gradient.
void scramble(ParamStore<double>& store, Rng& rng, double sd) {
  for (auto& e : store.entries()) {
    for (auto& v : e.tensor.mutable_data()) v += rng.normal(0.0, sd);
  }
}

std::vector<Td> leaves(const ParamStore<double>& store) {
  std::vector<Td> out;
  for (const auto& e : store.entries()) out.push_back(e.tensor);
  return out;
}

// Contracts the output of `out` with fixed random weights so every output
// element takes part in the checked scalar.
GradCheckReport check(const Builder& out, const std::vector<Td>& params, Rng& rng, std::size_t max_entries = 0) {
  std::size_t n;
  {
    NoGradGuard guard;
    n = out().numel();
  }
  std::vector<double> w(n);
  for (auto& x : w) x = rng.normal(0.0, 1.0);
  const auto f = [&] { return weighted_sum(out(), std::span<const double>(w)); };
  return grad_check(f, params, 1e-4, max_entries);
}

// Worst entry of either report; entry counts add up.
GradCheckReport merge(const GradCheckReport& a, const GradCheckReport& b) {
  GradCheckReport r = a.max_rel_err >= b.max_rel_err ? a : b;
  r.checked = a.checked + b.checked;
  r.nonsmooth = a.nonsmooth + b.nonsmooth;
  return r;
}

const std::vector<kernels::LevelGrid>& toy_levels() {
  static const std::vector<kernels::LevelGrid> lv{{{2, 2, 3}, 0}, {{1, 2, 2}, 12}};
  return lv;
}
constexpr std::size_t kToyTokens = 16;

GradCheckReport case_instance_norm(Rng& rng, const ModelConfig&) {
  const auto x = randn({3, 2, 3, 4}, rng), g = randn({3}, rng), b = randn({3}, rng);
  return check([&] { return instance_norm(x, g, b); }, {x, g, b}, rng);
}

GradCheckReport case_conv3d(Rng& rng, const ModelConfig&) {
  const auto x = randn({2, 4, 4, 5}, rng), w = randn({3, 2, 3, 3, 3}, rng, 0.3), b = randn({3}, rng);
  const auto r1 = check([&] { return conv3d(x, w, b, 1, 1); }, {x, w, b}, rng);
  const auto r2 = check([&] { return conv3d(x, w, b, 2, 1); }, {x, w, b}, rng);
  return merge(r1, r2);
}

GradCheckReport case_softmax(Rng& rng, const ModelConfig&) {
  const auto x = randn({4, 5}, rng);
  const auto r0 = check([&] { return softmax(x, 0); }, {x}, rng);
  const auto r1 = check([&] { return softmax(x, 1); }, {x}, rng);
  return merge(r0, r1);
}

GradCheckReport case_self_attention(Rng& rng, const ModelConfig&) {
  ParamStore<double> store;
  const auto p = SelfAttentionParams<double>::build("sa", 12, 2, store, rng);
  scramble(store, rng, 0.2);
  const auto q = randn({3, 12}, rng), k = randn({5, 12}, rng), v = randn({5, 12}, rng);
  auto params = leaves(store);
  params.insert(params.end(), {q, k, v});
  return check([&] { return self_attention(q, k, v, p); }, params, rng);
}

GradCheckReport case_trilinear(Rng& rng, const ModelConfig&) {
  const auto vol = randn({2, 3, 4, 5}, rng);
  std::vector<double> pts;
  for (int i = 0; i < 9; ++i) {
    pts.push_back(rng.uniform(-0.7, 2.7));
    pts.push_back(rng.uniform(-0.7, 3.7));
    pts.push_back(rng.uniform(-0.7, 4.7));
  }
  const auto points = Td::from_data({9, 3}, pts);
  return check([&] { return trilinear_sample(vol, points); }, {vol, points}, rng);
}

GradCheckReport case_msda(Rng& rng, const ModelConfig&) {
  const auto& lv = toy_levels();
  const std::size_t d = 12, heads = 2, L = 2, K = 2, Q = 4;
  // Module path: gradients reach queries and tokens through the offset and
  // weight heads.
  ParamStore<double> store;
  const auto p = MsdaParams<double>::build("msda", d, heads, L, K, store, rng);
  scramble(store, rng, 0.1);
  const auto query = randn({Q, d}, rng), tokens = randn({kToyTokens, d}, rng);
  const auto ref = uniform({Q, 3}, rng, 0.1, 0.9);
  auto params = leaves(store);
  params.insert(params.end(), {query, tokens});
  const auto r1 = check([&] { return msda(query, ref, tokens, std::span(lv), p); }, params, rng);
  // Sampling path: raw offsets and weight logits.
  const auto value = randn({kToyTokens, d}, rng);
  const auto offsets = randn({Q, heads * L * K * 3}, rng, 0.4);
  const auto logits = randn({Q, heads * L * K}, rng);
  const auto r2 = check(
      [&] {
        return msda_sample(value, std::span(lv), ref, offsets, normalize_logits(logits, heads, L * K), heads, K);
      },
      {value, offsets, logits}, rng);
  return merge(r1, r2);
}

ModelConfig toy_transformer(const ModelConfig& base) {
  ModelConfig c = base;
  c.d = 12;
  c.heads = 2;
  c.levels = 2;
  c.points = 2;
  c.ffn_hidden = 16;
  return c;
}

GradCheckReport case_encoder_layer(Rng& rng, const ModelConfig& base) {
  const auto cfg = toy_transformer(base);
  ParamStore<double> store;
  const auto p = EncoderLayer<double>::build("enc", cfg, store, rng);
  scramble(store, rng, 0.1);
  const auto& lv = toy_levels();
  const auto z = randn({kToyTokens, cfg.d}, rng), pos = randn({kToyTokens, cfg.d}, rng, 0.5);
  const auto ref = grid_reference_points<double>(std::span(lv));
  auto params = leaves(store);
  params.insert(params.end(), {z, pos});
  const double alpha = alpha_encoder(1, 1);
  return check([&] { return encoder_layer(z, pos, ref, std::span(lv), p, alpha); }, params, rng);
}

GradCheckReport case_decoder_layer(Rng& rng, const ModelConfig& base) {
  const auto cfg = toy_transformer(base);
  ParamStore<double> store;
  const auto p = DecoderLayer<double>::build("dec", cfg, store, rng);
  scramble(store, rng, 0.1);
  const auto& lv = toy_levels();
  const auto t = randn({3, cfg.d}, rng), eq = randn({3, cfg.d}, rng, 0.5);
  const auto memory = randn({kToyTokens, cfg.d}, rng);
  const auto ref = uniform({3, 3}, rng, 0.1, 0.9);
  auto params = leaves(store);
  params.insert(params.end(), {t, eq, memory});
  const double alpha = alpha_decoder(1);
  return check([&] { return decoder_layer(t, eq, ref, memory, std::span(lv), p, alpha); }, params, rng);
}

GradCheckReport case_predict_filters(Rng& rng, const ModelConfig&) {
  ParamStore<double> store;
  const auto head = FilterHead<double>::build(12, dynamic_param_count(4, 3), store, rng);
  scramble(store, rng, 0.1);
  const auto t = randn({3, 12}, rng);
  auto params = leaves(store);
  params.push_back(t);
  return check([&] { return predict_filters(t, head); }, params, rng);
}

GradCheckReport case_dynamic_forward(Rng& rng, const ModelConfig&) {
  const std::size_t w = 4, depth = 3;
  const auto g = randn({w, 2, 3, 4}, rng);
  const auto omega = randn({3, dynamic_param_count(w, depth)}, rng, 0.5);
  const auto r1 = check([&] { return dynamic_forward(g, omega, 1, w, depth); }, {g, omega}, rng);
  const auto r2 = check([&] { return dynamic_forward_all(g, omega, w, depth); }, {g, omega}, rng);
  return merge(r1, r2);
}

std::vector<std::uint8_t> random_labels(std::size_t n, Rng& rng) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(3));
  return y;
}

GradCheckReport case_masked_loss(Rng& rng, const ModelConfig&) {
  const auto z = randn({2, 2, 3, 4}, rng, 2.0);
  const auto y = random_labels(24, rng);
  GradCheckReport all;
  for (auto [organ, tumor] : {std::pair{true, true}, std::pair{true, false}, std::pair{false, true}}) {
    all = merge(all, check([&] { return masked_loss(z, y, organ, tumor, kDiceEps); }, {z}, rng));
  }
  return all;
}

GradCheckReport case_model(Rng& rng, const ModelConfig& cfg) {
  TransDoDNet<double> model(cfg, rng.next_u64());
  scramble(model.params(), rng, 0.02);
  const std::size_t e = std::max<std::size_t>(8, cfg.spatial_multiple());
  const auto x = randn({1, e, e, e}, rng);
  const auto y = random_labels(e * e * e, rng);
  const std::size_t task = cfg.num_tasks > 1 ? 1 : 0;
  const auto f = [&] { return masked_loss(model.task_logits(model.forward(x), task), y, true, true, kDiceEps); };
  auto params = leaves(model.params());
  params.push_back(x);
  return grad_check(f, params, 1e-4, 3);
}

using CaseFn = GradCheckReport (*)(Rng&, const ModelConfig&);

const std::vector<std::pair<std::string, CaseFn>>& registry() {
  static const std::vector<std::pair<std::string, CaseFn>> r{
      {"instance_norm", case_instance_norm},   {"conv3d", case_conv3d},
      {"softmax", case_softmax},               {"self_attention", case_self_attention},
      {"trilinear_sample", case_trilinear},    {"msda", case_msda},
      {"encoder_layer", case_encoder_layer},   {"decoder_layer", case_decoder_layer},
      {"predict_filters", case_predict_filters}, {"dynamic_forward", case_dynamic_forward},
      {"masked_loss", case_masked_loss},       {"micro_model", case_model},
  };
  return r;
}

}  // namespace

ModelConfig micro_config() {
  ModelConfig c;
  c.stage_channels = {4, 8};
  c.out_channels = 4;
  c.d = 12;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.levels = 2;
  c.points = 2;
  c.ffn_hidden = 16;
  c.head_width = 4;
  c.head_depth = 3;
  c.num_tasks = 2;
  return c;
}

std::vector<std::string> grad_case_names() {
  std::vector<std::string> out;
  for (const auto& [name, fn] : registry()) out.push_back(name);
  return out;
}

GradCase run_grad_case(const std::string& name, std::uint64_t seed, const ModelConfig& model) {
  model.validate();
  for (std::size_t i = 0; i < registry().size(); ++i) {
    const auto& [n, fn] = registry()[i];
    if (n != name) continue;
    Rng rng(mix_seed(seed, i));
    GradCase c{n, fn(rng, model)};
    if (n == "micro_model") c.min_verified = 100;
    return c;
  }
  throw ConfigError("unknown gradient check '" + name + "'");
}

std::vector<GradCase> run_grad_suite(std::uint64_t seed, const ModelConfig& model) {
  std::vector<GradCase> out;
  for (const auto& name : grad_case_names()) out.push_back(run_grad_case(name, seed, model));
  return out;
}

}  // namespace dodnet
