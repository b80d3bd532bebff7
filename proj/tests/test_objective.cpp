#include <doctest.h>

#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/objective.hpp"
#include "helpers.hpp"
#include "reference.hpp"

using namespace dodnet;
using testing::tensor;
using testing::values;

namespace {
std::vector<std::uint8_t> labels(std::size_t n, dodnet::Rng& rng) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(3));
  return y;
}
}  // namespace

TEST_CASE("perfect prediction approaches -2 when both channels are labeled") {
  Rng rng(31);
  const auto y = labels(60, rng);
  std::vector<double> z(120);
  for (std::size_t i = 0; i < 60; ++i) {
    z[i] = y[i] >= 1 ? 20.0 : -20.0;
    z[60 + i] = y[i] == 2 ? 20.0 : -20.0;
  }
  const auto l = masked_loss(Tensor<double>::from_data({2, 3, 4, 5}, z), y, true, true);
  CHECK(l.item() == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("p = 0.5 with empty targets gives ln 2") {
  const std::vector<std::uint8_t> y(40, 0);
  LossParts parts;
  const auto l = masked_loss(Tensor<double>::zeros({2, 2, 4, 5}), y, true, false, kDiceEps, &parts);
  CHECK(parts.dice == 0.0);
  CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("masked_loss matches the scalar oracle for every flag pair") {
  Rng rng(32);
  for (auto [o, t] : {std::pair{true, true}, std::pair{true, false}, std::pair{false, true}}) {
    const auto z = tensor({2, 3, 3, 4}, rng, 3.0);
    const auto y = labels(36, rng);
    CHECK(masked_loss(z, y, o, t).item() == doctest::Approx(ref::masked_loss(values(z), y, o, t, kDiceEps)).epsilon(1e-13));
  }
}

TEST_CASE("unlabeled channel gets exactly zero gradient and does not move the loss") {
  Rng rng(33);
  const auto y = labels(48, rng);
  auto z = tensor({2, 2, 4, 6}, rng, 2.0);
  z.set_requires_grad(true);
  const auto l = masked_loss(z, y, false, true);
  l.backward();
  for (std::size_t i = 0; i < 48; ++i) CHECK(z.grad()[i] == 0.0);
  bool any = false;
  for (std::size_t i = 48; i < 96; ++i) any = any || z.grad()[i] != 0.0;
  CHECK(any);

  auto moved = z.clone();
  for (std::size_t i = 0; i < 48; ++i) moved.mutable_data()[i] += rng.normal(0.0, 5.0);
  CHECK(masked_loss(moved, y, false, true).item() == l.item());
}

TEST_CASE("dice term decreases as overlap grows") {
  // Fixed-size masks sliding over the target: more overlap, lower loss.
  const std::size_t n = 32;
  std::vector<std::uint8_t> y(n, 0);
  for (std::size_t i = 0; i < 8; ++i) y[i] = 1;
  double prev = 1e9;
  for (int shift = 8; shift >= 0; shift -= 2) {
    std::vector<double> z(2 * n, -30.0);
    for (std::size_t i = 0; i < 8; ++i) z[shift + i] = 30.0;
    LossParts p;
    masked_loss(Tensor<double>::from_data({2, 1, 4, 8}, z), y, true, false, kDiceEps, &p);
    CHECK(p.dice < prev);
    prev = p.dice;
  }
}

TEST_CASE("masked_loss rejects bad input") {
  const std::vector<std::uint8_t> y(8, 0);
  auto z = Tensor<double>::zeros({2, 2, 2, 2});
  z.mutable_data()[3] = std::nan("");
  CHECK_THROWS_AS(masked_loss(z, y, true, true), NumericError);
  CHECK_THROWS_AS(masked_loss(Tensor<double>::zeros({3, 2, 2, 2}), y, true, true), DimensionError);
  CHECK_THROWS_AS(masked_loss(Tensor<double>::zeros({2, 2, 2, 2}), y, true, true, 0.0), ConfigError);
}
