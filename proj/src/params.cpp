#include "dodnet/params.hpp"

#include "dodnet/error.hpp"

namespace dodnet {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, const std::vector<double>& values) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  std::vector<T> data(values.begin(), values.end());
  auto t = Tensor<T>::from_data(std::move(shape), std::move(data), true);
  index_[name] = entries_.size();
  entries_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::zeros(const std::string& name, Shape shape) {
  const std::size_t n = shape_numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

template <typename T>
Tensor<T> ParamStore<T>::ones(const std::string& name, Shape shape) {
  const std::size_t n = shape_numel(shape);
  return add(name, std::move(shape), std::vector<double>(n, 1.0));
}

template <typename T>
Tensor<T> ParamStore<T>::normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return add(name, std::move(shape), v);
}

template <typename T>
Tensor<T> ParamStore<T>::uniform(const std::string& name, Shape shape, Rng& rng, double bound) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return add(name, std::move(shape), v);
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename T>
std::size_t ParamStore<T>::total() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) == 0) n += e.tensor.numel();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace dodnet
