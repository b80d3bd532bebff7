#include "dodnet/dynamic_head.hpp"

#include <algorithm>

#include "dodnet/attention.hpp"
#include "dodnet/error.hpp"
#include "dodnet/ops.hpp"

namespace dodnet {

std::size_t dynamic_param_count(std::size_t width, std::size_t depth) {
  if (width < 1) throw ConfigError("dynamic head width must be >= 1");
  if (depth < 2) throw ConfigError("dynamic head depth must be >= 2");
  return (width * width + width) * (depth - 1) + (width * 2 + 2);
}

template <typename T>
std::vector<HeadLayer<T>> slice_kernels(std::span<const T> omega, std::size_t width, std::size_t depth) {
  const std::size_t d_f = dynamic_param_count(width, depth);
  if (omega.size() != d_f) {
    throw FormatError("kernel vector has " + std::to_string(omega.size()) + " entries, expected " +
                          std::to_string(d_f),
                      std::min(omega.size(), d_f));
  }
  std::vector<HeadLayer<T>> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    HeadLayer<T> layer;
    layer.in = width;
    layer.out = l + 1 == depth ? 2 : width;
    layer.weight.assign(omega.begin() + off, omega.begin() + off + layer.out * layer.in);
    off += layer.out * layer.in;
    layer.bias.assign(omega.begin() + off, omega.begin() + off + layer.out);
    off += layer.out;
    layers.push_back(std::move(layer));
  }
  return layers;
}

template <typename T>
std::vector<T> pack_kernels(const std::vector<HeadLayer<T>>& layers) {
  std::vector<T> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

template <typename T>
FilterHead<T> FilterHead<T>::build(std::size_t d, std::size_t d_f, ParamStore<T>& store, Rng& rng) {
  FilterHead h;
  init_linear(store, "filters.fc1", d, d, rng, h.w1, h.b1);
  init_linear(store, "filters.fc2", d_f, d, rng, h.w2, h.b2);
  return h;
}

template <typename T>
Tensor<T> predict_filters(const Tensor<T>& t_out, const FilterHead<T>& head) {
  if (t_out.rank() != 2 || t_out.dim(1) != head.w1.dim(1)) {
    throw ConfigError("predict_filters: embeddings " + shape_str(t_out.shape()) +
                      " do not match filter MLP input width " + std::to_string(head.w1.dim(1)));
  }
  return linear(relu(linear(t_out, head.w1, head.b1)), head.w2, head.b2);
}

template <typename T>
Tensor<T> dynamic_forward(const Tensor<T>& g, const Tensor<T>& omega, std::size_t task,
                          std::size_t width, std::size_t depth) {
  if (omega.rank() != 2) throw DimensionError("dynamic_forward: ω must be M × d_F");
  if (task >= omega.dim(0)) {
    throw TaskError("task id " + std::to_string(task) + " out of range (M = " + std::to_string(omega.dim(0)) + ")");
  }
  const std::size_t d_f = dynamic_param_count(width, depth);
  if (omega.dim(1) != d_f) {
    throw ConfigError("dynamic_forward: ω has " + std::to_string(omega.dim(1)) + " columns, expected " +
                      std::to_string(d_f));
  }
  const auto kernel = reshape(slice_rows(omega, task, task + 1), {d_f});
  return dynamic_head(g, kernel, width, depth);
}

template <typename T>
Tensor<T> dynamic_forward_all(const Tensor<T>& g, const Tensor<T>& omega, std::size_t width,
                              std::size_t depth) {
  if (omega.rank() != 2) throw DimensionError("dynamic_forward_all: ω must be M × d_F");
  std::vector<Tensor<T>> heads;
  for (std::size_t m = 0; m < omega.dim(0); ++m) heads.push_back(dynamic_forward(g, omega, m, width, depth));
  const auto grid = volume_grid(g.shape());
  return reshape(concat_rows(heads), {omega.dim(0), 2, grid.d, grid.w, grid.h});
}

#define DODNET_INSTANTIATE_HEAD(T)                                                                 \
  template struct FilterHead<T>;                                                                   \
  template std::vector<HeadLayer<T>> slice_kernels(std::span<const T>, std::size_t, std::size_t);  \
  template std::vector<T> pack_kernels(const std::vector<HeadLayer<T>>&);                          \
  template Tensor<T> predict_filters(const Tensor<T>&, const FilterHead<T>&);                      \
  template Tensor<T> dynamic_forward(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t, \
                                     std::size_t);                                                 \
  template Tensor<T> dynamic_forward_all(const Tensor<T>&, const Tensor<T>&, std::size_t,          \
                                         std::size_t);

DODNET_INSTANTIATE_HEAD(float)
DODNET_INSTANTIATE_HEAD(double)

}  // namespace dodnet
