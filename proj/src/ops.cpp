#include "dodnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dodnet/error.hpp"

namespace dodnet {

namespace k = kernels;

namespace {

template <typename T>
using NodeT = Node<T>;

template <typename T>
T* grad_of(NodeT<T>& self, std::size_t i) {
  auto& in = self.inputs[i];
  return in->requires_grad ? in->grad_buffer() : nullptr;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
  require(t.rank() == r, std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                             shape_str(t.shape()));
}


}  // namespace

k::Grid3 volume_grid(const Shape& shape) {
  if (shape.size() != 4) throw DimensionError("expected a C×D×W×H volume, got " + shape_str(shape));
  return {shape[1], shape[2], shape[3]};
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  require(b.dim(0) == kk, "matmul: inner dimensions differ " + shape_str(a.shape()) + " · " +
                              shape_str(b.shape()));
  std::vector<T> out(m * n);
  k::gemm<T>(false, false, m, n, kk, T(1), a.ptr(), kk, b.ptr(), n, T(0), out.data(), n);
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [m, n, kk](NodeT<T>& self) {
    const T* dc = self.grad.data();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    if (T* da = grad_of(self, 0)) k::gemm<T>(false, true, m, kk, n, T(1), dc, n, bv, n, T(1), da, kk);
    if (T* db = grad_of(self, 1)) k::gemm<T>(true, false, kk, n, m, T(1), av, kk, dc, n, T(1), db, n);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  require(w.dim(1) == in, "linear: weight " + shape_str(w.shape()) + " does not accept input " +
                              shape_str(x.shape()));
  if (b.defined()) require(b.numel() == out_dim, "linear: bias size mismatch");
  std::vector<T> out(n * out_dim);
  if (b.defined()) {
    for (std::size_t r = 0; r < n; ++r) std::copy(b.ptr(), b.ptr() + out_dim, out.data() + r * out_dim);
  }
  k::gemm<T>(false, true, n, out_dim, in, T(1), x.ptr(), in, w.ptr(), in, b.defined() ? T(1) : T(0),
             out.data(), out_dim);
  return make_result<T>("linear", {n, out_dim}, std::move(out), {x, w, b},
                        [n, in, out_dim](NodeT<T>& self) {
                          const T* dy = self.grad.data();
                          if (T* dx = grad_of(self, 0)) {
                            k::gemm<T>(false, false, n, in, out_dim, T(1), dy, out_dim,
                                       self.inputs[1]->value.data(), in, T(1), dx, in);
                          }
                          if (T* dw = grad_of(self, 1)) {
                            k::gemm<T>(true, false, out_dim, in, n, T(1), dy, out_dim,
                                       self.inputs[0]->value.data(), in, T(1), dw, in);
                          }
                          if (T* db = grad_of(self, 2)) {
                            for (std::size_t r = 0; r < n; ++r) {
                              for (std::size_t j = 0; j < out_dim; ++j) db[j] += dy[r * out_dim + j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return add_scaled(a, b, T(1));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_scaled(a, b, T(-1));
}

template <typename T>
Tensor<T> add_scaled(const Tensor<T>& a, const Tensor<T>& b, T alpha) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  const T* av = a.ptr();
  const T* bv = b.ptr();
  if (alpha == T(1)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + alpha * bv[i];
  }
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [n, alpha](NodeT<T>& self) {
    const T* g = self.grad.data();
    if (T* da = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (T* db = grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] += alpha * g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.ptr()[i] * b.ptr()[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [n](NodeT<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    if (T* da = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
    }
    if (T* db = grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = factor * a.ptr()[i];
  return make_result<T>("scale", a.shape(), std::move(out), {a}, [n, factor](NodeT<T>& self) {
    if (T* da = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += factor * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  const std::size_t n = x.numel();
  return make_result<T>("sum", {1}, {s}, {x}, [n](NodeT<T>& self) {
    if (T* dx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> weights) {
  require(weights.size() == x.numel(), "weighted_sum: weight count mismatch");
  T s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.ptr()[i] * weights[i];
  std::vector<T> w(weights.begin(), weights.end());
  return make_result<T>("weighted_sum", {1}, {s}, {x}, [w = std::move(w)](NodeT<T>& self) {
    if (T* dx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < w.size(); ++i) dx[i] += self.grad[0] * w[i];
    }
  });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  const T* xv = x.ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return make_result<T>("relu", x.shape(), std::move(out), {x}, [n](NodeT<T>& self) {
    if (T* dx = grad_of(self, 0)) {
      const T* xv = self.inputs[0]->value.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (xv[i] > T(0)) dx[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  std::vector<T> out(n);
  const T* xv = x.ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return make_result<T>("sigmoid", x.shape(), std::move(out), {x}, [n](NodeT<T>& self) {
    if (T* dx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T s = self.value[i];
        dx[i] += self.grad[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  const std::size_t len = x.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(x.numel());
  const T* xv = x.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T s = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= s;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x},
                        [outer, inner, len](NodeT<T>& self) {
                          T* dx = grad_of(self, 0);
                          if (!dx) return;
                          const T* y = self.value.data();
                          const T* g = self.grad.data();
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t in = 0; in < inner; ++in) {
                              const std::size_t base = o * len * inner + in;
                              T dot = 0;
                              for (std::size_t j = 0; j < len; ++j) {
                                dot += g[base + j * inner] * y[base + j * inner];
                              }
                              for (std::size_t j = 0; j < len; ++j) {
                                const std::size_t i = base + j * inner;
                                dx[i] += y[i] * (g[i] - dot);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  require(gamma.numel() == cols && beta.numel() == cols, "layer_norm: gamma/beta width mismatch");
  std::vector<T> out(x.numel()), mu(rows), rstd(rows);
  k::layer_norm_forward(x.ptr(), gamma.ptr(), beta.ptr(), rows, cols, eps, out.data(), mu.data(),
                        rstd.data());
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, mu = std::move(mu), rstd = std::move(rstd)](NodeT<T>& self) {
        k::layer_norm_backward(self.inputs[0]->value.data(), self.inputs[1]->value.data(),
                               mu.data(), rstd.data(), self.grad.data(), rows, cols,
                               grad_of(self, 0), grad_of(self, 1), grad_of(self, 2));
      });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " -> " +
                                               shape_str(shape) + " changes element count");
  const std::size_t n = x.numel();
  return make_result<T>("reshape", std::move(shape), std::vector<T>(x.data().begin(), x.data().end()),
                        {x}, [n](NodeT<T>& self) {
                          if (T* dx = grad_of(self, 0)) {
                            for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(r * c);
  const T* xv = x.ptr();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  return make_result<T>("transpose", {c, r}, std::move(out), {x}, [r, c](NodeT<T>& self) {
    if (T* dx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts[0].numel() / parts[0].dim(0);
  Shape shape = parts[0].shape();
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require(p.rank() == shape.size() && p.numel() / p.dim(0) == cols,
            "concat_rows: incompatible part " + shape_str(p.shape()));
    rows += p.dim(0);
    sizes.push_back(p.numel());
  }
  shape[0] = rows;
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>("concat_rows", std::move(shape), std::move(out), parts,
                        [sizes = std::move(sizes)](NodeT<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t i = 0; i < sizes.size(); ++i) {
                            if (T* d = grad_of(self, i)) {
                              for (std::size_t j = 0; j < sizes[i]; ++j) d[j] += self.grad[off + j];
                            }
                            off += sizes[i];
                          }
                        });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= x.dim(0), "slice_rows: range out of bounds");
  const std::size_t cols = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<T> out(x.ptr() + begin * cols, x.ptr() + end * cols);
  return make_result<T>("slice_rows", std::move(shape), std::move(out), {x},
                        [begin, end, cols](NodeT<T>& self) {
                          if (T* dx = grad_of(self, 0)) {
                            for (std::size_t i = 0; i < (end - begin) * cols; ++i) {
                              dx[begin * cols + i] += self.grad[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    require(p.dim(0) == rows, "concat_cols: row count mismatch");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(rows * total);
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(parts[i].ptr() + r * widths[i], parts[i].ptr() + (r + 1) * widths[i],
                out.data() + r * total + off);
    }
    off += widths[i];
  }
  return make_result<T>("concat_cols", {rows, total}, std::move(out), parts,
                        [rows, total, widths = std::move(widths)](NodeT<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t i = 0; i < widths.size(); ++i) {
                            if (T* d = grad_of(self, i)) {
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t j = 0; j < widths[i]; ++j) {
                                  d[r * widths[i] + j] += self.grad[r * total + off + j];
                                }
                              }
                            }
                            off += widths[i];
                          }
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  require(begin <= end && end <= x.dim(1), "slice_cols: range out of bounds");
  const std::size_t rows = x.dim(0), cols = x.dim(1), w = end - begin;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(x.ptr() + r * cols + begin, x.ptr() + r * cols + end, out.data() + r * w);
  }
  return make_result<T>("slice_cols", {rows, w}, std::move(out), {x},
                        [rows, cols, begin, w](NodeT<T>& self) {
                          if (T* dx = grad_of(self, 0)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < w; ++j) {
                                dx[r * cols + begin + j] += self.grad[r * w + j];
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> index) {
  require_rank(table, 2, "gather_rows");
  const std::size_t cols = table.dim(1);
  std::vector<T> out(index.size() * cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < table.dim(0), "gather_rows: index out of range");
    std::copy(table.ptr() + index[i] * cols, table.ptr() + (index[i] + 1) * cols,
              out.data() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result<T>("gather_rows", {index.size(), cols}, std::move(out), {table},
                        [cols, idx = std::move(idx)](NodeT<T>& self) {
                          if (T* dt = grad_of(self, 0)) {
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              for (std::size_t j = 0; j < cols; ++j) {
                                dt[idx[i] * cols + j] += self.grad[i * cols + j];
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t padding) {
  require_rank(w, 5, "conv3d");
  const auto grid = volume_grid(x.shape());
  const std::size_t kernel = w.dim(2);
  require(w.dim(3) == kernel && w.dim(4) == kernel, "conv3d: kernel must be cubic");
  require(w.dim(1) == x.dim(0), "conv3d: weight expects " + std::to_string(w.dim(1)) +
                                    " input channels, got " + std::to_string(x.dim(0)));
  if (b.defined()) require(b.numel() == w.dim(0), "conv3d: bias size mismatch");
  const auto geo = k::ConvGeometry::make(x.dim(0), w.dim(0), grid, kernel, stride, padding);
  std::vector<T> out(geo.out_channels * geo.out.size());
  k::conv3d_forward(x.ptr(), w.ptr(), b.defined() ? b.ptr() : nullptr, geo, out.data());
  return make_result<T>("conv3d", {geo.out_channels, geo.out.d, geo.out.w, geo.out.h},
                        std::move(out), {x, w, b}, [geo](NodeT<T>& self) {
                          k::conv3d_backward(self.inputs[0]->value.data(),
                                             self.inputs[1]->value.data(), self.grad.data(), geo,
                                             grad_of(self, 0), grad_of(self, 1), grad_of(self, 2));
                        });
}

template <typename T>
Tensor<T> conv3d_1x1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(w, 2, "conv3d_1x1");
  const auto grid = volume_grid(x.shape());
  const std::size_t in_c = x.dim(0), out_c = w.dim(0), n = grid.size();
  require(w.dim(1) == in_c, "conv3d_1x1: weight expects " + std::to_string(w.dim(1)) +
                                " input channels, got " + std::to_string(in_c));
  if (b.defined()) require(b.numel() == out_c, "conv3d_1x1: bias size mismatch");
  std::vector<T> out(out_c * n);
  k::conv1x1_forward(x.ptr(), w.ptr(), b.defined() ? b.ptr() : nullptr, in_c, out_c, n, out.data());
  return make_result<T>("conv3d_1x1", {out_c, grid.d, grid.w, grid.h}, std::move(out), {x, w, b},
                        [in_c, out_c, n](NodeT<T>& self) {
                          k::conv1x1_backward(self.inputs[0]->value.data(),
                                              self.inputs[1]->value.data(), self.grad.data(), in_c,
                                              out_c, n, grad_of(self, 0), grad_of(self, 1),
                                              grad_of(self, 2));
                        });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const auto grid = volume_grid(x.shape());
  const std::size_t c = x.dim(0), n = grid.size();
  require(n >= 2, "instance_norm: needs at least 2 voxels per channel");
  require(gamma.numel() == c && beta.numel() == c, "instance_norm: gamma/beta size mismatch");
  std::vector<T> out(x.numel()), mu(c), rstd(c);
  k::instance_norm_forward(x.ptr(), gamma.ptr(), beta.ptr(), c, n, eps, out.data(), mu.data(),
                           rstd.data());
  return make_result<T>("instance_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [c, n, mu = std::move(mu), rstd = std::move(rstd)](NodeT<T>& self) {
                          k::instance_norm_backward(self.inputs[0]->value.data(),
                                                    self.inputs[1]->value.data(), mu.data(),
                                                    rstd.data(), self.grad.data(), c, n,
                                                    grad_of(self, 0), grad_of(self, 1),
                                                    grad_of(self, 2));
                        });
}

template <typename T>
Tensor<T> upsample_trilinear2x(const Tensor<T>& x) {
  const auto grid = volume_grid(x.shape());
  const std::size_t c = x.dim(0);
  std::vector<T> out(c * 8 * grid.size());
  k::upsample2x_forward(x.ptr(), c, grid, out.data());
  return make_result<T>("upsample2x", {c, 2 * grid.d, 2 * grid.w, 2 * grid.h}, std::move(out), {x},
                        [c, grid](NodeT<T>& self) {
                          if (T* dx = grad_of(self, 0)) k::upsample2x_backward(self.grad.data(), c, grid, dx);
                        });
}

template <typename T>
Tensor<T> trilinear_sample(const Tensor<T>& volume, const Tensor<T>& points) {
  const auto grid = volume_grid(volume.shape());
  require_rank(points, 2, "trilinear_sample");
  require(points.dim(1) == 3, "trilinear_sample: points must be P×3");
  const std::size_t c = volume.dim(0), p = points.dim(0);
  std::vector<T> out(c * p);
  k::trilinear_sample_forward(volume.ptr(), c, grid, points.ptr(), p, out.data());
  return make_result<T>("trilinear_sample", {c, p}, std::move(out), {volume, points},
                        [c, p, grid](NodeT<T>& self) {
                          k::trilinear_sample_backward(self.inputs[0]->value.data(), c, grid,
                                                       self.inputs[1]->value.data(), p,
                                                       self.grad.data(), grad_of(self, 0),
                                                       grad_of(self, 1));
                        });
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
k::MsdaDims check_msda(const Tensor<T>& value, std::span<const k::LevelGrid> levels,
                       const Tensor<T>& ref, const Tensor<T>& offsets, const Tensor<T>& attn,
                       std::size_t heads, std::size_t points) {
  if (levels.empty()) throw ConfigError("msda: empty level set");
  require_rank(value, 2, "msda value");
  require_rank(ref, 2, "msda ref");
  k::MsdaDims dims{ref.dim(0), value.dim(1), heads, levels.size(), points};
  if (heads == 0 || dims.model_dim % heads != 0) {
    throw ConfigError("msda: model width " + std::to_string(dims.model_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  require(ref.dim(1) == 3, "msda: reference points must be Q×3");
  const std::size_t samples = dims.queries * heads * levels.size() * points;
  require(offsets.numel() == 3 * samples, "msda: offsets size mismatch");
  require(attn.numel() == samples, "msda: attention weight size mismatch");
  for (const auto& lv : levels) {
    require(lv.start + lv.grid.size() <= value.dim(0), "msda: level exceeds value rows");
  }
  return dims;
}

}  // namespace

template <typename T>
Tensor<T> msda_sample(const Tensor<T>& value, std::span<const k::LevelGrid> levels,
                      const Tensor<T>& ref, const Tensor<T>& offsets, const Tensor<T>& attn,
                      std::size_t heads, std::size_t points) {
  const auto dims = check_msda(value, levels, ref, offsets, attn, heads, points);
  std::vector<T> out(dims.queries * dims.model_dim);
  k::msda_forward(value.ptr(), levels, ref.ptr(), offsets.ptr(), attn.ptr(), dims, out.data());
  std::vector<k::LevelGrid> lv(levels.begin(), levels.end());
  return make_result<T>("msda", {dims.queries, dims.model_dim}, std::move(out),
                        {value, ref, offsets, attn},
                        [dims, lv = std::move(lv)](NodeT<T>& self) {
                          k::msda_backward(self.inputs[0]->value.data(), std::span(lv),
                                           self.inputs[1]->value.data(),
                                           self.inputs[2]->value.data(),
                                           self.inputs[3]->value.data(), dims, self.grad.data(),
                                           grad_of(self, 0), grad_of(self, 1), grad_of(self, 2),
                                           grad_of(self, 3));
                        });
}

template <typename T>
Tensor<T> deform_attn_sample(const Tensor<T>& value, k::Grid3 grid, const Tensor<T>& ref,
                             const Tensor<T>& offsets, const Tensor<T>& attn, std::size_t heads,
                             std::size_t points) {
  const k::LevelGrid level{grid, 0};
  const auto dims = check_msda(value, std::span(&level, 1), ref, offsets, attn, heads, points);
  std::vector<T> out(dims.queries * dims.model_dim);
  k::deform_attn_forward(value.ptr(), grid, ref.ptr(), offsets.ptr(), attn.ptr(), dims.queries,
                         dims.model_dim, heads, points, out.data());
  return make_result<T>("deform_attn", {dims.queries, dims.model_dim}, std::move(out),
                        {value, ref, offsets, attn}, [dims, level](NodeT<T>& self) {
                          k::msda_backward(self.inputs[0]->value.data(), std::span(&level, 1),
                                           self.inputs[1]->value.data(),
                                           self.inputs[2]->value.data(),
                                           self.inputs[3]->value.data(), dims, self.grad.data(),
                                           grad_of(self, 0), grad_of(self, 1), grad_of(self, 2),
                                           grad_of(self, 3));
                        });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> dynamic_head(const Tensor<T>& g, const Tensor<T>& kernel, std::size_t width,
                       std::size_t depth, bool relu_between) {
  const auto grid = volume_grid(g.shape());
  if (depth < 1) throw ConfigError("dynamic_head: depth must be >= 1");
  require(g.dim(0) == width, "dynamic_head: feature map has " + std::to_string(g.dim(0)) +
                                 " channels, head width is " + std::to_string(width));
  const std::size_t d_f = (width * width + width) * (depth - 1) + (2 * width + 2);
  require(kernel.numel() == d_f, "dynamic_head: kernel vector has " +
                                     std::to_string(kernel.numel()) + " entries, expected " +
                                     std::to_string(d_f));
  const std::size_t n = grid.size();
  std::vector<T> out(2 * n);
  k::dynamic_head_forward(g.ptr(), n, kernel.ptr(), width, depth, relu_between, out.data());
  return make_result<T>("dynamic_head", {2, grid.d, grid.w, grid.h}, std::move(out), {g, kernel},
                        [n, width, depth, relu_between](NodeT<T>& self) {
                          k::dynamic_head_backward(self.inputs[0]->value.data(), n,
                                                   self.inputs[1]->value.data(), width, depth,
                                                   relu_between, self.grad.data(),
                                                   grad_of(self, 0), grad_of(self, 1));
                        });
}

#define DODNET_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                                    \
  template Tensor<T> add_scaled(const Tensor<T>&, const Tensor<T>&, T);                             \
  template Tensor<T> sum(const Tensor<T>&);                                                         \
  template Tensor<T> mean(const Tensor<T>&);                                                        \
  template Tensor<T> weighted_sum(const Tensor<T>&, std::span<const T>);                            \
  template Tensor<T> relu(const Tensor<T>&);                                                        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                     \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
  template Tensor<T> transpose(const Tensor<T>&);                                                   \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                   \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,      \
                            std::size_t);                                                           \
  template Tensor<T> conv3d_1x1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> upsample_trilinear2x(const Tensor<T>&);                                        \
  template Tensor<T> trilinear_sample(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> msda_sample(const Tensor<T>&, std::span<const k::LevelGrid>, const Tensor<T>&, \
                                 const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);     \
  template Tensor<T> deform_attn_sample(const Tensor<T>&, k::Grid3, const Tensor<T>&,               \
                                        const Tensor<T>&, const Tensor<T>&, std::size_t,            \
                                        std::size_t);                                               \
  template Tensor<T> dynamic_head(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t, bool);

DODNET_INSTANTIATE_OPS(float)
DODNET_INSTANTIATE_OPS(double)

}  // namespace dodnet
