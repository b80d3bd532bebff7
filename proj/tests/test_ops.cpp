#include <doctest.h>

#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"
#include "helpers.hpp"
#include "reference.hpp"

using namespace dodnet;
using testing::max_abs_diff;
using testing::tensor;
using testing::values;

TEST_CASE("matmul and linear match the naive product") {
  Rng rng(1);
  const auto a = tensor({5, 7}, rng), b = tensor({7, 3}, rng);
  CHECK(max_abs_diff(values(matmul(a, b)), ref::matmul(values(a), values(b), 5, 7, 3)) < 1e-12);

  // linear(x, w, b) = x wᵀ + b
  const auto w = tensor({3, 7}, rng), bias = tensor({3}, rng);
  const auto y = values(linear(a, w, bias));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t o = 0; o < 3; ++o) {
      double s = bias.data()[o];
      for (std::size_t k = 0; k < 7; ++k) s += a.data()[i * 7 + k] * w.data()[o * 7 + k];
      CHECK(std::abs(y[i * 3 + o] - s) < 1e-12);
    }
}

TEST_CASE("conv3d matches the seven-loop oracle across strides and padding") {
  Rng rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0}, std::tuple{3, 1, 0}}) {
    const auto x = tensor({3, 5, 6, 7}, rng), w = tensor({4, 3, std::size_t(k), std::size_t(k), std::size_t(k)}, rng);
    const auto b = tensor({4}, rng);
    const auto y = conv3d(x, w, b, stride, pad);
    ref::Dims od{};
    const auto r = ref::conv3d(values(x), values(w), values(b), 3, 4, {5, 6, 7}, k, stride, pad, &od);
    CHECK(y.shape() == Shape{4, od[0], od[1], od[2]});
    CHECK(max_abs_diff(values(y), r) < 1e-12);
  }
}

TEST_CASE("conv3d_1x1, instance_norm, softmax and upsampling match their oracles") {
  Rng rng(3);
  const auto x = tensor({3, 4, 5, 6}, rng);
  const auto w = tensor({2, 3}, rng), b = tensor({2}, rng);
  CHECK(max_abs_diff(values(conv3d_1x1(x, w, b)), ref::conv1x1(values(x), values(w), values(b), 3, 2, 120)) < 1e-12);

  const auto g = tensor({3}, rng), beta = tensor({3}, rng);
  CHECK(max_abs_diff(values(instance_norm(x, g, beta)), ref::instance_norm(values(x), values(g), values(beta), 3, 120, 1e-5)) <
        1e-10);

  const auto s = tensor({4, 9}, rng, 3.0);
  CHECK(max_abs_diff(values(softmax(s, 1)), ref::softmax_rows(values(s), 4, 9)) < 1e-14);

  const auto up = upsample_trilinear2x(x);
  CHECK(up.shape() == Shape{3, 8, 10, 12});
  CHECK(max_abs_diff(values(up), ref::upsample2x(values(x), 3, {4, 5, 6})) < 1e-12);
}

TEST_CASE("upsampling preserves constants and softmax rows sum to one") {
  const auto c = Tensor<double>::full({2, 3, 3, 3}, 1.5);
  const auto up = upsample_trilinear2x(c);
  for (double v : up.data()) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));
  Rng rng(4);
  const auto p = softmax(tensor({3, 6}, rng, 10.0), 1);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c2 = 0; c2 < 6; ++c2) s += p.data()[r * 6 + c2];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("trilinear sampling matches the 8-corner oracle, including outside points") {
  Rng rng(5);
  const auto vol = tensor({2, 3, 4, 5}, rng);
  std::vector<double> pts;
  for (int i = 0; i < 40; ++i) {
    pts.push_back(rng.uniform(-1.5, 3.5));
    pts.push_back(rng.uniform(-1.5, 4.5));
    pts.push_back(rng.uniform(-1.5, 5.5));
  }
  const auto out = trilinear_sample(vol, Tensor<double>::from_data({40, 3}, pts));
  REQUIRE(out.shape() == Shape{2, 40});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t p = 0; p < 40; ++p) {
      const double r = ref::trilinear(vol.ptr() + c * 60, {3, 4, 5}, pts[3 * p], pts[3 * p + 1], pts[3 * p + 2]);
      CHECK(std::abs(out.data()[c * 40 + p] - r) < 1e-12);
    }
  // At lattice points the sample is the voxel value.
  const auto at = trilinear_sample(vol, Tensor<double>::from_data({1, 3}, {2, 1, 3}));
  CHECK(at.data()[0] == doctest::Approx(vol.data()[(2 * 4 + 1) * 5 + 3]));
}

TEST_CASE("reverse mode accumulates through shared inputs") {
  auto x = Tensor<double>::from_data({3}, {1.0, -2.0, 3.0}, true);
  const auto y = sum(add(mul(x, x), scale(x, 3.0)));  // Σ x² + 3x
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
  CHECK(x.grad()[2] == doctest::Approx(9.0));
}

TEST_CASE("NoGradGuard stops recording and non-finite results are rejected") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(grad_enabled());
  const auto big = Tensor<double>::from_data({1}, {1e308});
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("shape errors are reported as DimensionError") {
  Rng rng(6);
  CHECK_THROWS_AS(matmul(tensor({2, 3}, rng), tensor({4, 2}, rng)), DimensionError);
  CHECK_THROWS_AS(add(tensor({2, 3}, rng), tensor({3, 2}, rng)), DimensionError);
  CHECK_THROWS_AS(conv3d(tensor({2, 4, 4, 4}, rng), tensor({3, 1, 3, 3, 3}, rng), Tensor<double>{}, 1, 1),
                  DimensionError);
}

TEST_CASE("repeated evaluation is bit-identical") {
  Rng rng(7);
  const auto x = tensor({4, 6, 8, 8}, rng), w = tensor({4, 4, 3, 3, 3}, rng);
  const auto a = values(conv3d(x, w, Tensor<double>{}, 1, 1));
  // Reductions are ordered, so a fresh evaluation is bit-identical.
  const auto b = values(conv3d(x, w, Tensor<double>{}, 1, 1));
  CHECK(a == b);
}
