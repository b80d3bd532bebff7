#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dodnet/rng.hpp"
#include "dodnet/tensor.hpp"

namespace testing {

inline std::vector<double> randn(std::size_t n, dodnet::Rng& rng, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

inline dodnet::Tensor<double> tensor(dodnet::Shape s, dodnet::Rng& rng, double sd = 1.0) {
  const auto n = dodnet::shape_numel(s);
  return dodnet::Tensor<double>::from_data(std::move(s), randn(n, rng, sd));
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

inline std::vector<double> values(const dodnet::Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace testing
