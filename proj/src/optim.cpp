#include "dodnet/optim.hpp"

#include <cmath>

#include "dodnet/error.hpp"

namespace dodnet {

double poly_lr(std::size_t k, std::size_t max_k, double lr_init) {
  if (max_k == 0) throw ScheduleError("poly_lr: max epoch must be positive");
  if (k > max_k) {
    throw ScheduleError("poly_lr: epoch " + std::to_string(k) + " beyond max epoch " + std::to_string(max_k));
  }
  return lr_init * std::pow(1.0 - static_cast<double>(k) / static_cast<double>(max_k), 0.9);
}

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& store, AdamWConfig cfg) : store_(&store), cfg_(cfg) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.tensor.numel(), T(0));
    v_.emplace_back(e.tensor.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step_size = lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  const double decay = 1.0 - lr * cfg_.weight_decay;
  auto& entries = store_->entries();
  for (std::size_t pi = 0; pi < entries.size(); ++pi) {
    auto& p = entries[pi].tensor;
    auto x = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double xi = static_cast<double>(x[i]) * decay;
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double denom = std::sqrt(vi) / sqrt_bc2 + cfg_.eps;
      x[i] = static_cast<T>(xi - step_size * mi / denom);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace dodnet
