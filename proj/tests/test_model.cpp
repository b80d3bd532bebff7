#include <doctest.h>

#include "dodnet/error.hpp"
#include "dodnet/gradsuite.hpp"
#include "dodnet/model.hpp"
#include "helpers.hpp"

using namespace dodnet;

namespace {
Tensor<double> input(const Extent3& s, std::uint64_t seed) {
  Rng rng(seed);
  return testing::tensor({1, s[0], s[1], s[2]}, rng, 1.0);
}
}  // namespace

TEST_CASE("forward shapes") {
  const auto cfg = micro_config();
  TransDoDNet<double> model(cfg, 3);
  NoGradGuard ng;
  const auto f = model.forward(input({4, 6, 8}, 1));
  CHECK(f.pyramid.size() == 2);
  CHECK(f.g.shape() == Shape{cfg.out_channels, 4, 6, 8});
  CHECK(f.omega.shape() == Shape{cfg.num_tasks, dynamic_param_count(cfg.head_width, cfg.head_depth)});
  CHECK(f.gen.t_out.shape() == Shape{cfg.num_tasks, cfg.d});
  CHECK(f.gen.z.shape() == f.pyramid.back().shape());
  CHECK(model.task_logits(f, 1).shape() == Shape{2, 4, 6, 8});
  CHECK(model.all_logits(f).shape() == Shape{cfg.num_tasks, 2, 4, 6, 8});
  CHECK_THROWS_AS(model.task_logits(f, 2), TaskError);
  CHECK_THROWS_AS(model.forward(input({5, 6, 8}, 1)), DimensionError);
}

TEST_CASE("construction is deterministic in the seed") {
  const auto cfg = micro_config();
  TransDoDNet<double> a(cfg, 11), b(cfg, 11), c(cfg, 12);
  REQUIRE(a.params().entries().size() == b.params().entries().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto x = testing::values(a.params().entries()[i].tensor);
    CHECK(x == testing::values(b.params().entries()[i].tensor));
    differs |= x != testing::values(c.params().entries()[i].tensor);
  }
  CHECK(differs);
}

TEST_CASE("fusion modes: A with a zeroed transformer volume equals B") {
  auto ca = micro_config(), cb = micro_config(), cc = micro_config();
  cb.fusion = FusionMode::B;
  cc.fusion = FusionMode::C;
  TransDoDNet<double> a(ca, 5), b(cb, 5), c(cc, 5);
  NoGradGuard ng;
  const auto x = input({4, 4, 4}, 2);
  const auto fa = a.forward(x, {.zero_transformer_volume = true});
  const auto fb = b.forward(x);
  CHECK(testing::values(a.all_logits(fa)) == testing::values(b.all_logits(fb)));
  // The modes differ once Z is live.
  CHECK(testing::values(a.all_logits(a.forward(x))) != testing::values(b.all_logits(fb)));
  CHECK(testing::values(c.all_logits(c.forward(x))) != testing::values(b.all_logits(fb)));
}

TEST_CASE("parameter groups partition the store") {
  const auto cfg = micro_config();
  TransDoDNet<float> model(cfg, 0);
  const auto n = model.counts();
  CHECK(n.backbone + n.generator + n.filters == n.total);
  CHECK(n.dynamic == dynamic_param_count(cfg.head_width, cfg.head_depth));
  CHECK(n.filters == cfg.d * cfg.d + cfg.d + cfg.d * n.dynamic + n.dynamic);
}

TEST_CASE("copy_params converts precision and rejects mismatches") {
  const auto cfg = micro_config();
  TransDoDNet<double> d(cfg, 1);
  TransDoDNet<float> f(cfg, 2);
  copy_params(d.params(), f.params());
  for (std::size_t i = 0; i < d.params().entries().size(); ++i) {
    const auto a = d.params().entries()[i].tensor.data();
    const auto b = f.params().entries()[i].tensor.data();
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(b[j] == static_cast<float>(a[j]));
  }
  auto other = cfg;
  other.d = 18;
  other.heads = 3;
  TransDoDNet<float> g(other, 1);
  CHECK_THROWS_AS(copy_params(d.params(), g.params()), ConfigError);
}
