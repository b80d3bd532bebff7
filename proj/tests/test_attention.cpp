#include <doctest.h>

#include <cmath>

#include "dodnet/attention.hpp"
#include "dodnet/config.hpp"
#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"
#include "dodnet/posenc.hpp"
#include "dodnet/transformer.hpp"
#include "helpers.hpp"
#include "reference.hpp"

using namespace dodnet;
using testing::max_abs_diff;
using testing::tensor;
using testing::values;

TEST_CASE("positional encoding: zero position, layout and divisibility") {
  const std::size_t d = 12;
  const auto pe = positional_encoding(2, 3, 4, d);
  REQUIRE(pe.size() == 24 * d);
  for (std::size_t c = 0; c < d; ++c) CHECK(pe[c] == (c % 2 == 0 ? 0.0 : 1.0));
  // Row of voxel (z, y, x) = (1, 2, 3): first block depends on z only.
  const std::size_t row = (1 * 3 + 2) * 4 + 3;
  CHECK(pe[row * d + 0] == doctest::Approx(std::sin(1.0)));
  CHECK(pe[row * d + 4] == doctest::Approx(std::sin(2.0)));
  CHECK(pe[row * d + 8] == doctest::Approx(std::sin(3.0)));
  CHECK(pe[row * d + 3] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 2.0 / 4.0))));
  CHECK_THROWS_AS(positional_encoding(2, 2, 2, 8), ConfigError);
}

TEST_CASE("self_attention matches the per-head loop oracle") {
  Rng rng(11);
  const std::size_t d = 12, heads = 3;
  ParamStore<double> store;
  const auto p = SelfAttentionParams<double>::build("sa", d, heads, store, rng);
  for (auto& e : store.entries())
    for (auto& v : e.tensor.mutable_data()) v += rng.normal(0.0, 0.2);
  const auto q = tensor({4, d}, rng), k = tensor({6, d}, rng), v = tensor({6, d}, rng);
  ref::AttnWeights w{values(p.wq), values(p.bq), values(p.wk), values(p.bk),
                     values(p.wv), values(p.bv), values(p.wo), values(p.bo)};
  const auto r = ref::self_attention(values(q), values(k), values(v), 4, 6, d, heads, w);
  CHECK(max_abs_diff(values(self_attention(q, k, v, p)), r) < 1e-12);
}

TEST_CASE("normalize_logits sums to one over levels and points of each head") {
  Rng rng(12);
  const auto logits = tensor({3, 2 * 6}, rng, 3.0);
  const auto a = normalize_logits(logits, 2, 6);
  const auto flat = values(a);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t h = 0; h < 2; ++h) {
      double s = 0;
      for (std::size_t k = 0; k < 6; ++k) s += flat[(q * 2 + h) * 6 + k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("msda sampling matches the all-loops oracle on random instances") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t heads = 1 + rng.below(3), dh = 1 + rng.below(3), d = heads * dh;
    const std::size_t L = 1 + rng.below(3), K = 1 + rng.below(3), Q = 1 + rng.below(5);
    std::vector<kernels::LevelGrid> lv;
    std::vector<ref::Level> rl;
    std::size_t start = 0;
    for (std::size_t l = 0; l < L; ++l) {
      const kernels::Grid3 g{1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4)};
      lv.push_back({g, start});
      rl.push_back({{g.d, g.w, g.h}, start});
      start += g.size();
    }
    const auto value = tensor({start, d}, rng);
    std::vector<double> refp(Q * 3);
    for (auto& r : refp) r = rng.uniform();
    const auto offsets = tensor({Q, heads * L * K * 3}, rng, 1.5);
    const auto attn = normalize_logits(tensor({Q, heads * L * K}, rng), heads, L * K);
    const auto out = msda_sample(value, std::span(lv), Tensor<double>::from_data({Q, 3}, refp), offsets, attn, heads, K);
    const auto r = ref::msda(values(value), rl, refp, values(offsets), values(attn), Q, d, heads, K);
    CHECK(max_abs_diff(values(out), r) < 1e-12);
  }
}

TEST_CASE("single-level deformable attention equals msda with one level") {
  Rng rng(14);
  ParamStore<double> store;
  auto p = MsdaParams<double>::build("da", 12, 2, 1, 3, store, rng);
  for (auto& e : store.entries())
    for (auto& v : e.tensor.mutable_data()) v += rng.normal(0.0, 0.2);
  const kernels::Grid3 g{2, 3, 3};
  const std::vector<kernels::LevelGrid> lv{{g, 0}};
  const auto tokens = tensor({18, 12}, rng), query = tensor({5, 12}, rng);
  std::vector<double> refp(15);
  for (auto& r : refp) r = rng.uniform();
  const auto ref = Tensor<double>::from_data({5, 3}, refp);
  CHECK(values(deformable_attention(query, ref, tokens, g, p)) == values(msda(query, ref, tokens, std::span(lv), p)));
}

TEST_CASE("grid reference points are voxel centres in [0, 1]") {
  const std::vector<kernels::LevelGrid> lv{{{2, 2, 4}, 0}, {{1, 1, 2}, 16}};
  const auto r = grid_reference_points<double>(std::span(lv));
  REQUIRE(r.shape() == Shape{18, 3});
  CHECK(r.data()[0] == 0.25);
  CHECK(r.data()[2] == 0.125);
  CHECK(r.data()[16 * 3 + 0] == 0.5);
  CHECK(r.data()[17 * 3 + 2] == 0.75);
}

TEST_CASE("deep-norm scales follow their closed forms") {
  CHECK(alpha_encoder(6, 6) == doctest::Approx(0.81 * std::pow(6.0 * 6 * 6 * 6 * 6, 1.0 / 16)).epsilon(1e-15));
  CHECK(alpha_decoder(6) == doctest::Approx(std::pow(18.0, 0.25)).epsilon(1e-15));
  CHECK(alpha_decoder(1) > 1.0);
}
