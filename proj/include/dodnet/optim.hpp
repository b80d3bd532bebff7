#pragma once

#include <cstddef>
#include <vector>

#include "dodnet/params.hpp"

namespace dodnet {

/// lr_init · (1 − k/K)^0.9. ScheduleError when k > K or K == 0.
double poly_lr(std::size_t k, std::size_t max_k, double lr_init);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled weight decay, bias-corrected moments (same update order as the
/// common PyTorch implementation).
template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& store, AdamWConfig cfg);

  void step(double lr);
  std::size_t steps() const { return t_; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  ParamStore<T>* store_;
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace dodnet
