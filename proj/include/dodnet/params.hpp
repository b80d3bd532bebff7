#pragma once

// Named trainable parameters in registration order. The order doubles as the
// checkpoint manifest order.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "dodnet/rng.hpp"
#include "dodnet/tensor.hpp"

namespace dodnet {

template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T> add(const std::string& name, Shape shape, const std::vector<double>& values);

  // Initialisers draw in double precision, so float and double stores built
  // from the same seed hold the same values up to rounding.
  Tensor<T> zeros(const std::string& name, Shape shape);
  Tensor<T> ones(const std::string& name, Shape shape);
  Tensor<T> normal(const std::string& name, Shape shape, Rng& rng, double stddev);
  /// U(-bound, bound)
  Tensor<T> uniform(const std::string& name, Shape shape, Rng& rng, double bound);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  std::size_t total() const;
  /// Number of scalars in parameters whose name starts with `prefix`.
  std::size_t count(const std::string& prefix) const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dodnet
