#include <doctest.h>

#include <cmath>

#include "dodnet/error.hpp"
#include "dodnet/optim.hpp"

using namespace dodnet;

TEST_CASE("poly schedule endpoints and shape") {
  CHECK(poly_lr(0, 300, 2e-4) == 2e-4);
  CHECK(poly_lr(300, 300, 2e-4) == 0.0);
  CHECK(poly_lr(150, 300, 1.0) == doctest::Approx(std::pow(0.5, 0.9)));
  for (std::size_t k = 1; k <= 300; ++k) CHECK(poly_lr(k, 300, 1.0) < poly_lr(k - 1, 300, 1.0));
  CHECK_THROWS_AS(poly_lr(301, 300, 1.0), ScheduleError);
  CHECK_THROWS_AS(poly_lr(0, 0, 1.0), ScheduleError);
}

TEST_CASE("AdamW follows the decoupled update written out by hand") {
  ParamStore<double> store;
  auto p = store.add("p", {3}, {1.0, -2.0, 0.5});
  const AdamWConfig cfg{0.9, 0.999, 1e-8, 0.01};
  AdamW<double> opt(store, cfg);
  std::vector<double> x{1.0, -2.0, 0.5}, m(3, 0.0), v(3, 0.0);
  const std::vector<std::vector<double>> grads{{0.1, -0.3, 2.0}, {-0.2, 0.1, 1.0}, {0.05, 0.0, -1.0}};
  const double lr = 1e-2;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    store.zero_grad();
    auto g = p.mutable_grad();
    for (std::size_t i = 0; i < 3; ++i) g[i] = grads[t - 1][i];
    opt.step(lr);
    for (std::size_t i = 0; i < 3; ++i) {
      const double gi = grads[t - 1][i];
      x[i] *= 1.0 - lr * cfg.weight_decay;
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, double(t)));
      const double vh = v[i] / (1 - std::pow(0.999, double(t)));
      x[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(opt.steps() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.data()[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("a zero gradient still applies weight decay") {
  ParamStore<double> store;
  auto p = store.add("p", {1}, {2.0});
  AdamW<double> opt(store, AdamWConfig{});
  store.zero_grad();
  p.mutable_grad();
  opt.step(0.1);
  CHECK(p.data()[0] == doctest::Approx(2.0 * (1 - 0.1 * 1e-2)));
}
