#include <doctest.h>

#include "dodnet/dynamic_head.hpp"
#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"
#include "helpers.hpp"
#include "reference.hpp"

using namespace dodnet;
using testing::max_abs_diff;
using testing::tensor;
using testing::values;

TEST_CASE("dynamic parameter counts") {
  CHECK(dynamic_param_count(8, 2) == 90);
  CHECK(dynamic_param_count(8, 3) == 162);
  CHECK(dynamic_param_count(8, 4) == 234);
  CHECK(dynamic_param_count(4, 3) == 50);
  CHECK(dynamic_param_count(16, 3) == 578);
  CHECK_THROWS_AS(dynamic_param_count(8, 1), ConfigError);
  CHECK_THROWS_AS(dynamic_param_count(0, 3), ConfigError);
}

TEST_CASE("slice and pack are inverses and reject the wrong length") {
  Rng rng(21);
  const auto omega = testing::randn(dynamic_param_count(5, 4), rng);
  const auto layers = slice_kernels<double>(omega, 5, 4);
  REQUIRE(layers.size() == 4);
  CHECK(layers[0].out == 5);
  CHECK(layers[0].in == 5);
  CHECK(layers[3].out == 2);
  CHECK(layers[3].bias.size() == 2);
  CHECK(pack_kernels(layers) == omega);
  std::vector<double> short_omega(omega.begin(), omega.end() - 1);
  CHECK_THROWS_AS(slice_kernels<double>(short_omega, 5, 4), FormatError);
}

TEST_CASE("dynamic_forward matches the per-voxel oracle and picks the task row") {
  Rng rng(22);
  const std::size_t w = 6, depth = 3, M = 3;
  const auto g = tensor({w, 3, 4, 5}, rng);
  const auto omega = tensor({M, dynamic_param_count(w, depth)}, rng, 0.4);
  for (std::size_t m = 0; m < M; ++m) {
    const auto out = dynamic_forward(g, omega, m, w, depth);
    REQUIRE(out.shape() == Shape{2, 3, 4, 5});
    const auto row = values(omega);
    const std::vector<double> k(row.begin() + m * dynamic_param_count(w, depth),
                                row.begin() + (m + 1) * dynamic_param_count(w, depth));
    CHECK(max_abs_diff(values(out), ref::dynamic_head(values(g), 60, k, w, depth)) < 1e-12);
  }
  CHECK_THROWS_AS(dynamic_forward(g, omega, M, w, depth), TaskError);
}

TEST_CASE("dynamic_forward_all rows are bit-identical to single-task heads") {
  Rng rng(23);
  const std::size_t w = 8, depth = 3, M = 7;
  const auto g = Tensor<float>::from_data({w, 4, 6, 6}, [&] {
    std::vector<float> v(w * 144);
    for (auto& x : v) x = float(rng.normal());
    return v;
  }());
  std::vector<float> om(M * 162);
  for (auto& x : om) x = float(rng.normal(0.0, 0.3));
  const auto omega = Tensor<float>::from_data({M, 162}, om);
  const auto all = dynamic_forward_all(g, omega, w, depth);
  REQUIRE(all.shape() == Shape{M, 2, 4, 6, 6});
  for (std::size_t m = 0; m < M; ++m) {
    const auto one = dynamic_forward(g, omega, m, w, depth);
    const std::vector<float> row(all.data().begin() + m * 288, all.data().begin() + (m + 1) * 288);
    CHECK(row == std::vector<float>(one.data().begin(), one.data().end()));
  }
}

TEST_CASE("predict_filters emits one d_F row per task") {
  Rng rng(24);
  ParamStore<double> store;
  const auto head = FilterHead<double>::build(12, 162, store, rng);
  const auto omega = predict_filters(tensor({7, 12}, rng), head);
  CHECK(omega.shape() == Shape{7, 162});
}
