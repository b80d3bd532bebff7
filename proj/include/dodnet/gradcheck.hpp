#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dodnet/tensor.hpp"

namespace dodnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t nonsmooth = 0;  // entries skipped because f has a kink within h
  // Location of the worst entry.
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Denominator floor of the relative error: gradients below it are compared
/// on absolute error.
inline constexpr double kGradFloor = 1e-6;
/// Relative disagreement between the h and h/2 estimates that marks an entry
/// as non-smooth.
inline constexpr double kSmoothTolerance = 1e-5;

/// Compares reverse-mode gradients of `f` against central differences.
/// `f` must rebuild its graph from `params` on each call. When
/// `max_entries` is non-zero, at most that many evenly spaced entries per
/// parameter are perturbed. Throws NumericError if f is not finite.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& params, double h = 1e-4,
                           std::size_t max_entries = 0);

std::string describe(const GradCheckReport& r);

}  // namespace dodnet
