#include "dodnet/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dodnet/error.hpp"

namespace dodnet::kernels {

namespace {

inline std::ptrdiff_t as_signed(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

template <typename T>
std::vector<T>& scratch(std::size_t n) {
  static thread_local std::vector<T> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                 float beta, float* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  double alpha, const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
}

// ---------------------------------------------------------------------------
// 3D convolution (im2col + GEMM)

ConvGeometry ConvGeometry::make(std::size_t in_channels, std::size_t out_channels, Grid3 in,
                                std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (kernel == 0 || stride == 0) throw DimensionError("conv3d: kernel and stride must be positive");
  auto extent = [&](std::size_t s) -> std::size_t {
    auto span = as_signed(s) + 2 * as_signed(padding) - as_signed(kernel);
    if (span < 0) {
      throw DimensionError("conv3d: kernel " + std::to_string(kernel) + " larger than padded extent " +
                           std::to_string(s + 2 * padding));
    }
    return static_cast<std::size_t>(span) / stride + 1;
  };
  ConvGeometry g;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.padding = padding;
  g.in = in;
  g.out = {extent(in.d), extent(in.w), extent(in.h)};
  return g;
}

namespace {

template <typename T>
void im2col3d(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t k = g.kernel;
  const std::size_t rows = g.col_rows();
  const std::size_t cols = g.out.size();
  const auto pad = as_signed(g.padding);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < as_signed(rows); ++r) {
    const std::size_t kx = r % k, ky = (r / k) % k, kz = (r / (k * k)) % k, ci = r / (k * k * k);
    const T* xc = x + ci * g.in.size();
    T* dst = col + r * cols;
    for (std::size_t oz = 0; oz < g.out.d; ++oz) {
      const auto iz = as_signed(oz * g.stride + kz) - pad;
      for (std::size_t oy = 0; oy < g.out.w; ++oy) {
        const auto iy = as_signed(oy * g.stride + ky) - pad;
        T* drow = dst + (oz * g.out.w + oy) * g.out.h;
        if (iz < 0 || iz >= as_signed(g.in.d) || iy < 0 || iy >= as_signed(g.in.w)) {
          std::fill(drow, drow + g.out.h, T(0));
          continue;
        }
        const T* srow = xc + (iz * as_signed(g.in.w) + iy) * as_signed(g.in.h);
        for (std::size_t ox = 0; ox < g.out.h; ++ox) {
          const auto ix = as_signed(ox * g.stride + kx) - pad;
          drow[ox] = (ix >= 0 && ix < as_signed(g.in.h)) ? srow[ix] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im3d(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out.size();
  const auto pad = as_signed(g.padding);
  // One thread per input channel: the rows of a channel only touch that channel.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < as_signed(g.in_channels); ++ci) {
    T* xc = dx + ci * g.in.size();
    for (std::size_t kk = 0; kk < k * k * k; ++kk) {
      const std::size_t kx = kk % k, ky = (kk / k) % k, kz = kk / (k * k);
      const T* src = col + (ci * k * k * k + kk) * cols;
      for (std::size_t oz = 0; oz < g.out.d; ++oz) {
        const auto iz = as_signed(oz * g.stride + kz) - pad;
        if (iz < 0 || iz >= as_signed(g.in.d)) continue;
        for (std::size_t oy = 0; oy < g.out.w; ++oy) {
          const auto iy = as_signed(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= as_signed(g.in.w)) continue;
          const T* srow = src + (oz * g.out.w + oy) * g.out.h;
          T* drow = xc + (iz * as_signed(g.in.w) + iy) * as_signed(g.in.h);
          for (std::size_t ox = 0; ox < g.out.h; ++ox) {
            const auto ix = as_signed(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < as_signed(g.in.h)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void add_bias_rows(T* y, const T* bias, std::size_t rows, std::size_t n) {
  if (!bias) return;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < as_signed(rows); ++r) {
    T* row = y + r * n;
    const T b = bias[r];
    for (std::size_t i = 0; i < n; ++i) row[i] += b;
  }
}

template <typename T>
void accumulate_row_sums(const T* dy, std::size_t rows, std::size_t n, T* db) {
  if (!db) return;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < as_signed(rows); ++r) {
    const T* row = dy + r * n;
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    db[r] += s;
  }
}

}  // namespace

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* y) {
  const std::size_t rows = g.col_rows(), cols = g.out.size();
  if (g.kernel == 1 && g.stride == 1 && g.padding == 0) {
    conv1x1_forward(x, w, bias, g.in_channels, g.out_channels, cols, y);
    return;
  }
  auto& col = scratch<T>(rows * cols);
  im2col3d(x, g, col.data());
  gemm<T>(false, false, g.out_channels, cols, rows, T(1), w, rows, col.data(), cols, T(0), y, cols);
  add_bias_rows(y, bias, g.out_channels, cols);
}

template <typename T>
void conv3d_backward(const T* x, const T* w, const T* dy, const ConvGeometry& g, T* dx, T* dw,
                     T* db) {
  const std::size_t rows = g.col_rows(), cols = g.out.size();
  if (g.kernel == 1 && g.stride == 1 && g.padding == 0) {
    conv1x1_backward(x, w, dy, g.in_channels, g.out_channels, cols, dx, dw, db);
    return;
  }
  auto& col = scratch<T>(rows * cols);
  if (dw) {
    im2col3d(x, g, col.data());
    gemm<T>(false, true, g.out_channels, rows, cols, T(1), dy, cols, col.data(), cols, T(1), dw, rows);
  }
  accumulate_row_sums(dy, g.out_channels, cols, db);
  if (dx) {
    gemm<T>(true, false, rows, cols, g.out_channels, T(1), w, rows, dy, cols, T(0), col.data(), cols);
    col2im3d(col.data(), g, dx);
  }
}

template <typename T>
void conv1x1_forward(const T* x, const T* w, const T* bias, std::size_t in_c, std::size_t out_c,
                     std::size_t n, T* y) {
  gemm<T>(false, false, out_c, n, in_c, T(1), w, in_c, x, n, T(0), y, n);
  add_bias_rows(y, bias, out_c, n);
}

template <typename T>
void conv1x1_backward(const T* x, const T* w, const T* dy, std::size_t in_c, std::size_t out_c,
                      std::size_t n, T* dx, T* dw, T* db) {
  if (dw) gemm<T>(false, true, out_c, in_c, n, T(1), dy, n, x, n, T(1), dw, in_c);
  accumulate_row_sums(dy, out_c, n, db);
  if (dx) gemm<T>(true, false, in_c, n, out_c, T(1), w, in_c, dy, n, T(1), dx, n);
}

// ---------------------------------------------------------------------------
// Normalisation

template <typename T>
void instance_norm_forward(const T* x, const T* gamma, const T* beta, std::size_t channels,
                           std::size_t n, T eps, T* y, T* mean, T* rstd) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < as_signed(channels); ++c) {
    const T* xc = x + c * n;
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += xc[i];
    const double mu = s / static_cast<double>(n);
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = xc[i] - mu;
      v += dv * dv;
    }
    v /= static_cast<double>(n);
    const T m = static_cast<T>(mu);
    const T r = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    mean[c] = m;
    rstd[c] = r;
    const T ga = gamma ? gamma[c] : T(1), be = beta ? beta[c] : T(0);
    T* yc = y + c * n;
    for (std::size_t i = 0; i < n; ++i) yc[i] = ga * ((xc[i] - m) * r) + be;
  }
}

template <typename T>
void instance_norm_backward(const T* x, const T* gamma, const T* mean, const T* rstd,
                            const T* dy, std::size_t channels, std::size_t n, T* dx, T* dgamma,
                            T* dbeta) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < as_signed(channels); ++c) {
    const T* xc = x + c * n;
    const T* dyc = dy + c * n;
    const T m = mean[c], r = rstd[c];
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double xhat = (xc[i] - m) * r;
      sum_dy += dyc[i];
      sum_dy_xhat += dyc[i] * xhat;
    }
    if (dgamma) dgamma[c] += static_cast<T>(sum_dy_xhat);
    if (dbeta) dbeta[c] += static_cast<T>(sum_dy);
    if (dx) {
      const double ga = gamma ? gamma[c] : 1.0;
      const double inv_n = 1.0 / static_cast<double>(n);
      const double a = sum_dy * inv_n, b = sum_dy_xhat * inv_n;
      T* dxc = dx + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double xhat = (xc[i] - m) * r;
        dxc[i] += static_cast<T>(ga * r * (dyc[i] - a - xhat * b));
      }
    }
  }
}

template <typename T>
void layer_norm_forward(const T* x, const T* gamma, const T* beta, std::size_t rows,
                        std::size_t cols, T eps, T* y, T* mean, T* rstd) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < as_signed(rows); ++r) {
    const T* xr = x + r * cols;
    double s = 0;
    for (std::size_t i = 0; i < cols; ++i) s += xr[i];
    const double mu = s / static_cast<double>(cols);
    double v = 0;
    for (std::size_t i = 0; i < cols; ++i) v += (xr[i] - mu) * (xr[i] - mu);
    v /= static_cast<double>(cols);
    const T m = static_cast<T>(mu);
    const T rs = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    mean[r] = m;
    rstd[r] = rs;
    T* yr = y + r * cols;
    for (std::size_t i = 0; i < cols; ++i) yr[i] = gamma[i] * ((xr[i] - m) * rs) + beta[i];
  }
}

template <typename T>
void layer_norm_backward(const T* x, const T* gamma, const T* mean, const T* rstd, const T* dy,
                         std::size_t rows, std::size_t cols, T* dx, T* dgamma, T* dbeta) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < as_signed(rows); ++r) {
      const T* xr = x + r * cols;
      const T* dyr = dy + r * cols;
      const T m = mean[r], rs = rstd[r];
      double a = 0, b = 0;
      for (std::size_t i = 0; i < cols; ++i) {
        const double g = static_cast<double>(dyr[i]) * gamma[i];
        a += g;
        b += g * ((xr[i] - m) * rs);
      }
      a /= static_cast<double>(cols);
      b /= static_cast<double>(cols);
      T* dxr = dx + r * cols;
      for (std::size_t i = 0; i < cols; ++i) {
        const double g = static_cast<double>(dyr[i]) * gamma[i];
        const double xhat = (xr[i] - m) * rs;
        dxr[i] += static_cast<T>(rs * (g - a - xhat * b));
      }
    }
  }
  if (dgamma || dbeta) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < as_signed(cols); ++i) {
      double sg = 0, sb = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double xhat = (x[r * cols + i] - mean[r]) * rstd[r];
        sg += dy[r * cols + i] * xhat;
        sb += dy[r * cols + i];
      }
      if (dgamma) dgamma[i] += static_cast<T>(sg);
      if (dbeta) dbeta[i] += static_cast<T>(sb);
    }
  }
}

// ---------------------------------------------------------------------------
// Trilinear x2 upsampling

namespace {

struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

AxisTaps upsample_taps(std::size_t n) {
  AxisTaps t;
  const std::size_t out = 2 * n;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_lo.resize(out);
  t.w_hi.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > n - 1) i0 = n - 1;
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double f = src - static_cast<double>(i0);
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.w_lo[o] = 1.0 - f;
    t.w_hi[o] = f;
  }
  return t;
}

}  // namespace

template <typename T>
void upsample2x_forward(const T* x, std::size_t channels, Grid3 in, T* y) {
  const AxisTaps tz = upsample_taps(in.d), ty = upsample_taps(in.w), tx = upsample_taps(in.h);
  const Grid3 out{2 * in.d, 2 * in.w, 2 * in.h};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < as_signed(channels); ++c) {
    const T* xc = x + c * in.size();
    T* yc = y + c * out.size();
    for (std::size_t oz = 0; oz < out.d; ++oz) {
      for (std::size_t oy = 0; oy < out.w; ++oy) {
        const T* r00 = xc + (tz.lo[oz] * in.w + ty.lo[oy]) * in.h;
        const T* r01 = xc + (tz.lo[oz] * in.w + ty.hi[oy]) * in.h;
        const T* r10 = xc + (tz.hi[oz] * in.w + ty.lo[oy]) * in.h;
        const T* r11 = xc + (tz.hi[oz] * in.w + ty.hi[oy]) * in.h;
        const T w00 = static_cast<T>(tz.w_lo[oz] * ty.w_lo[oy]);
        const T w01 = static_cast<T>(tz.w_lo[oz] * ty.w_hi[oy]);
        const T w10 = static_cast<T>(tz.w_hi[oz] * ty.w_lo[oy]);
        const T w11 = static_cast<T>(tz.w_hi[oz] * ty.w_hi[oy]);
        T* yr = yc + (oz * out.w + oy) * out.h;
        for (std::size_t ox = 0; ox < out.h; ++ox) {
          const std::size_t a = tx.lo[ox], b = tx.hi[ox];
          const T wa = static_cast<T>(tx.w_lo[ox]), wb = static_cast<T>(tx.w_hi[ox]);
          yr[ox] = w00 * (wa * r00[a] + wb * r00[b]) + w01 * (wa * r01[a] + wb * r01[b]) +
                   w10 * (wa * r10[a] + wb * r10[b]) + w11 * (wa * r11[a] + wb * r11[b]);
        }
      }
    }
  }
}

template <typename T>
void upsample2x_backward(const T* dy, std::size_t channels, Grid3 in, T* dx) {
  const AxisTaps tz = upsample_taps(in.d), ty = upsample_taps(in.w), tx = upsample_taps(in.h);
  const Grid3 out{2 * in.d, 2 * in.w, 2 * in.h};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < as_signed(channels); ++c) {
    T* xc = dx + c * in.size();
    const T* yc = dy + c * out.size();
    for (std::size_t oz = 0; oz < out.d; ++oz) {
      for (std::size_t oy = 0; oy < out.w; ++oy) {
        T* r00 = xc + (tz.lo[oz] * in.w + ty.lo[oy]) * in.h;
        T* r01 = xc + (tz.lo[oz] * in.w + ty.hi[oy]) * in.h;
        T* r10 = xc + (tz.hi[oz] * in.w + ty.lo[oy]) * in.h;
        T* r11 = xc + (tz.hi[oz] * in.w + ty.hi[oy]) * in.h;
        const T w00 = static_cast<T>(tz.w_lo[oz] * ty.w_lo[oy]);
        const T w01 = static_cast<T>(tz.w_lo[oz] * ty.w_hi[oy]);
        const T w10 = static_cast<T>(tz.w_hi[oz] * ty.w_lo[oy]);
        const T w11 = static_cast<T>(tz.w_hi[oz] * ty.w_hi[oy]);
        const T* yr = yc + (oz * out.w + oy) * out.h;
        for (std::size_t ox = 0; ox < out.h; ++ox) {
          const std::size_t a = tx.lo[ox], b = tx.hi[ox];
          const T wa = static_cast<T>(tx.w_lo[ox]) * yr[ox], wb = static_cast<T>(tx.w_hi[ox]) * yr[ox];
          r00[a] += w00 * wa;
          r00[b] += w00 * wb;
          r01[a] += w01 * wa;
          r01[b] += w01 * wb;
          r10[a] += w10 * wa;
          r10[b] += w10 * wb;
          r11[a] += w11 * wa;
          r11[b] += w11 * wb;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Fractional sampling

namespace {

/// The eight lattice neighbours of a point with their interpolation weights
/// and the weights' derivatives along each axis.
template <typename T>
struct Corners {
  std::ptrdiff_t index[8];  // flat voxel index, -1 when outside the volume
  T weight[8];
  T dz[8], dy[8], dx[8];

  Corners(Grid3 g, T z, T y, T x) {
    const T fz0 = std::floor(z), fy0 = std::floor(y), fx0 = std::floor(x);
    const auto z0 = static_cast<std::ptrdiff_t>(fz0);
    const auto y0 = static_cast<std::ptrdiff_t>(fy0);
    const auto x0 = static_cast<std::ptrdiff_t>(fx0);
    const T lz = z - fz0, ly = y - fy0, lx = x - fx0;
    const T wz[2] = {T(1) - lz, lz}, wy[2] = {T(1) - ly, ly}, wx[2] = {T(1) - lx, lx};
    const T sgn[2] = {T(-1), T(1)};
    int n = 0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 2; ++c, ++n) {
          const std::ptrdiff_t iz = z0 + a, iy = y0 + b, ix = x0 + c;
          const bool inside = iz >= 0 && iz < as_signed(g.d) && iy >= 0 && iy < as_signed(g.w) &&
                              ix >= 0 && ix < as_signed(g.h);
          index[n] = inside ? (iz * as_signed(g.w) + iy) * as_signed(g.h) + ix : -1;
          weight[n] = wz[a] * wy[b] * wx[c];
          dz[n] = sgn[a] * wy[b] * wx[c];
          dy[n] = wz[a] * sgn[b] * wx[c];
          dx[n] = wz[a] * wy[b] * sgn[c];
        }
      }
    }
  }
};

/// Accumulates `attn * sample(value)` for one (query, head, sample). Kept out
/// of line so single- and multi-scale paths execute identical arithmetic.
template <typename T>
[[gnu::noinline]] void accumulate_sample(const T* value, std::size_t model_dim, std::size_t ch0,
                                         std::size_t head_dim, const LevelGrid& level,
                                         const T* ref, const T* offset, T attn, T* out) {
  const Grid3& g = level.grid;
  const T z = ref[0] * static_cast<T>(g.d) - T(0.5) + offset[0];
  const T y = ref[1] * static_cast<T>(g.w) - T(0.5) + offset[1];
  const T x = ref[2] * static_cast<T>(g.h) - T(0.5) + offset[2];
  const Corners<T> cn(g, z, y, x);
  for (int i = 0; i < 8; ++i) {
    if (cn.index[i] < 0) continue;
    const T wgt = attn * cn.weight[i];
    const T* row = value + (level.start + static_cast<std::size_t>(cn.index[i])) * model_dim + ch0;
    for (std::size_t c = 0; c < head_dim; ++c) out[c] += wgt * row[c];
  }
}

}  // namespace

template <typename T>
void trilinear_sample_forward(const T* volume, std::size_t channels, Grid3 grid, const T* points,
                              std::size_t n_points, T* out) {
  const std::size_t vox = grid.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < as_signed(n_points); ++p) {
    const Corners<T> cn(grid, points[3 * p], points[3 * p + 1], points[3 * p + 2]);
    for (std::size_t c = 0; c < channels; ++c) {
      const T* vc = volume + c * vox;
      T acc = 0;
      for (int i = 0; i < 8; ++i) {
        if (cn.index[i] >= 0) acc += cn.weight[i] * vc[cn.index[i]];
      }
      out[c * n_points + p] = acc;
    }
  }
}

template <typename T>
void trilinear_sample_backward(const T* volume, std::size_t channels, Grid3 grid, const T* points,
                               std::size_t n_points, const T* dout, T* dvolume, T* dpoints) {
  const std::size_t vox = grid.size();
  if (dvolume) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < as_signed(channels); ++c) {
      T* dv = dvolume + c * vox;
      for (std::size_t p = 0; p < n_points; ++p) {
        const Corners<T> cn(grid, points[3 * p], points[3 * p + 1], points[3 * p + 2]);
        const T g = dout[c * n_points + p];
        for (int i = 0; i < 8; ++i) {
          if (cn.index[i] >= 0) dv[cn.index[i]] += cn.weight[i] * g;
        }
      }
    }
  }
  if (dpoints) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < as_signed(n_points); ++p) {
      const Corners<T> cn(grid, points[3 * p], points[3 * p + 1], points[3 * p + 2]);
      T gz = 0, gy = 0, gx = 0;
      for (std::size_t c = 0; c < channels; ++c) {
        const T* vc = volume + c * vox;
        const T g = dout[c * n_points + p];
        for (int i = 0; i < 8; ++i) {
          if (cn.index[i] < 0) continue;
          const T v = vc[cn.index[i]] * g;
          gz += cn.dz[i] * v;
          gy += cn.dy[i] * v;
          gx += cn.dx[i] * v;
        }
      }
      dpoints[3 * p] += gz;
      dpoints[3 * p + 1] += gy;
      dpoints[3 * p + 2] += gx;
    }
  }
}

// ---------------------------------------------------------------------------
// Deformable attention sampling

template <typename T>
void msda_forward(const T* value, std::span<const LevelGrid> levels, const T* ref,
                  const T* offsets, const T* attn, const MsdaDims& dims, T* out) {
  const std::size_t dh = dims.head_dim();
  const std::size_t lk = dims.levels * dims.points;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < as_signed(dims.queries); ++q) {
    T* oq = out + q * dims.model_dim;
    std::fill(oq, oq + dims.model_dim, T(0));
    for (std::size_t hd = 0; hd < dims.heads; ++hd) {
      const std::size_t base = (q * dims.heads + hd) * lk;
      for (std::size_t l = 0; l < dims.levels; ++l) {
        for (std::size_t k = 0; k < dims.points; ++k) {
          const std::size_t s = base + l * dims.points + k;
          accumulate_sample(value, dims.model_dim, hd * dh, dh, levels[l], ref + 3 * q,
                            offsets + 3 * s, attn[s], oq + hd * dh);
        }
      }
    }
  }
}

template <typename T>
void deform_attn_forward(const T* value, Grid3 grid, const T* ref, const T* offsets, const T* attn,
                         std::size_t queries, std::size_t model_dim, std::size_t heads,
                         std::size_t points, T* out) {
  const LevelGrid level{grid, 0};
  const std::size_t dh = model_dim / heads;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < as_signed(queries); ++q) {
    T* oq = out + q * model_dim;
    std::fill(oq, oq + model_dim, T(0));
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t k = 0; k < points; ++k) {
        const std::size_t s = (q * heads + hd) * points + k;
        accumulate_sample(value, model_dim, hd * dh, dh, level, ref + 3 * q, offsets + 3 * s,
                          attn[s], oq + hd * dh);
      }
    }
  }
}

template <typename T>
void msda_backward(const T* value, std::span<const LevelGrid> levels, const T* ref,
                   const T* offsets, const T* attn, const MsdaDims& dims, const T* dout,
                   T* dvalue, T* dref, T* doffsets, T* dattn) {
  const std::size_t dh = dims.head_dim();
  const std::size_t lk = dims.levels * dims.points;
  const std::size_t n_samples = dims.queries * dims.heads * lk;
  std::vector<T> dloc(3 * n_samples, T(0));
  // Heads own disjoint channel slices of `value`, so parallelising over heads
  // keeps every accumulation race-free and in a fixed order.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t hd = 0; hd < as_signed(dims.heads); ++hd) {
    const std::size_t ch0 = hd * dh;
    for (std::size_t q = 0; q < dims.queries; ++q) {
      const T* g = dout + q * dims.model_dim + ch0;
      const std::size_t base = (q * dims.heads + hd) * lk;
      for (std::size_t l = 0; l < dims.levels; ++l) {
        const LevelGrid& lv = levels[l];
        const Grid3& gr = lv.grid;
        for (std::size_t k = 0; k < dims.points; ++k) {
          const std::size_t s = base + l * dims.points + k;
          const T* off = offsets + 3 * s;
          const T z = ref[3 * q] * static_cast<T>(gr.d) - T(0.5) + off[0];
          const T y = ref[3 * q + 1] * static_cast<T>(gr.w) - T(0.5) + off[1];
          const T x = ref[3 * q + 2] * static_cast<T>(gr.h) - T(0.5) + off[2];
          const Corners<T> cn(gr, z, y, x);
          const T a = attn[s];
          T da = 0, gz = 0, gy = 0, gx = 0;
          for (int i = 0; i < 8; ++i) {
            if (cn.index[i] < 0) continue;
            const std::size_t row_idx = (lv.start + static_cast<std::size_t>(cn.index[i])) * dims.model_dim + ch0;
            const T* row = value + row_idx;
            T dot = 0;
            for (std::size_t c = 0; c < dh; ++c) dot += g[c] * row[c];
            da += cn.weight[i] * dot;
            gz += cn.dz[i] * dot;
            gy += cn.dy[i] * dot;
            gx += cn.dx[i] * dot;
            if (dvalue) {
              const T wgt = a * cn.weight[i];
              T* drow = dvalue + row_idx;
              for (std::size_t c = 0; c < dh; ++c) drow[c] += wgt * g[c];
            }
          }
          if (dattn) dattn[s] += da;
          dloc[3 * s] = a * gz;
          dloc[3 * s + 1] = a * gy;
          dloc[3 * s + 2] = a * gx;
        }
      }
    }
  }
  if (doffsets) {
    for (std::size_t i = 0; i < 3 * n_samples; ++i) doffsets[i] += dloc[i];
  }
  if (dref) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t q = 0; q < as_signed(dims.queries); ++q) {
      T acc[3] = {0, 0, 0};
      for (std::size_t hd = 0; hd < dims.heads; ++hd) {
        for (std::size_t l = 0; l < dims.levels; ++l) {
          const Grid3& gr = levels[l].grid;
          const T ext[3] = {static_cast<T>(gr.d), static_cast<T>(gr.w), static_cast<T>(gr.h)};
          for (std::size_t k = 0; k < dims.points; ++k) {
            const std::size_t s = ((q * dims.heads + hd) * dims.levels + l) * dims.points + k;
            for (int a = 0; a < 3; ++a) acc[a] += dloc[3 * s + a] * ext[a];
          }
        }
      }
      for (int a = 0; a < 3; ++a) dref[3 * q + a] += acc[a];
    }
  }
}

// ---------------------------------------------------------------------------
// Dynamic head

namespace {

constexpr std::size_t kHeadChunk = 128;

struct HeadLayout {
  std::size_t width, depth;
  std::size_t in(std::size_t) const { return width; }
  std::size_t out(std::size_t layer) const { return layer + 1 == depth ? 2 : width; }
  std::size_t offset(std::size_t layer) const { return layer * (width * width + width); }
};

/// One 1x1x1 layer over a chunk: dst[o][v] = b[o] + sum_i w[o][i] * src[i][v].
template <typename T>
void head_layer(const T* w, const T* b, std::size_t in_c, std::size_t out_c, const T* src,
                std::size_t src_stride, std::size_t count, bool relu, T* dst) {
  for (std::size_t o = 0; o < out_c; ++o) {
    T* d = dst + o * kHeadChunk;
    for (std::size_t v = 0; v < count; ++v) d[v] = b[o];
    for (std::size_t i = 0; i < in_c; ++i) {
      const T wi = w[o * in_c + i];
      const T* s = src + i * src_stride;
      for (std::size_t v = 0; v < count; ++v) d[v] += wi * s[v];
    }
    if (relu) {
      for (std::size_t v = 0; v < count; ++v) d[v] = d[v] > T(0) ? d[v] : T(0);
    }
  }
}

}  // namespace

template <typename T>
void dynamic_head_forward(const T* g, std::size_t n, const T* kernel, std::size_t width,
                          std::size_t depth, bool relu, T* out) {
  const HeadLayout lay{width, depth};
  const std::size_t chunks = (n + kHeadChunk - 1) / kHeadChunk;
#pragma omp parallel
  {
    const std::size_t rows = std::max<std::size_t>(width, 2);
    std::vector<T> a(rows * kHeadChunk), b(rows * kHeadChunk);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ch = 0; ch < as_signed(chunks); ++ch) {
      const std::size_t v0 = ch * kHeadChunk;
      const std::size_t count = std::min(kHeadChunk, n - v0);
      const T* src = g + v0;
      std::size_t stride = n;
      T* cur = a.data();
      T* other = b.data();
      for (std::size_t l = 0; l < depth; ++l) {
        const T* w = kernel + lay.offset(l);
        const T* bias = w + lay.out(l) * lay.in(l);
        head_layer(w, bias, lay.in(l), lay.out(l), src, stride, count, relu && l + 1 < depth, cur);
        src = cur;
        stride = kHeadChunk;
        std::swap(cur, other);
      }
      // `src` now holds the 2-channel logits of this chunk.
      for (std::size_t o = 0; o < 2; ++o) {
        std::copy(src + o * kHeadChunk, src + o * kHeadChunk + count, out + o * n + v0);
      }
    }
  }
}

template <typename T>
void dynamic_head_backward(const T* g, std::size_t n, const T* kernel, std::size_t width,
                           std::size_t depth, bool relu, const T* dout, T* dg, T* dkernel) {
  const HeadLayout lay{width, depth};
  const std::size_t chunks = (n + kHeadChunk - 1) / kHeadChunk;
  const std::size_t n_params = lay.offset(depth - 1) + 2 * width + 2;
  // Per-chunk partial kernel gradients, reduced afterwards in chunk order.
  std::vector<T> partial(dkernel ? chunks * n_params : 0, T(0));
#pragma omp parallel
  {
    const std::size_t rows = std::max<std::size_t>(width, 2);
    const std::size_t act_stride = rows * kHeadChunk;
    std::vector<T> acts(depth * act_stride);
    std::vector<T> delta(act_stride), next(act_stride);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ch = 0; ch < as_signed(chunks); ++ch) {
      const std::size_t v0 = ch * kHeadChunk;
      const std::size_t count = std::min(kHeadChunk, n - v0);
      // Recompute activations of this chunk.
      for (std::size_t l = 0; l < depth; ++l) {
        const T* w = kernel + lay.offset(l);
        const T* bias = w + lay.out(l) * lay.in(l);
        const T* src = l == 0 ? g + v0 : acts.data() + (l - 1) * act_stride;
        const std::size_t stride = l == 0 ? n : kHeadChunk;
        head_layer(w, bias, lay.in(l), lay.out(l), src, stride, count, relu && l + 1 < depth,
                   acts.data() + l * act_stride);
      }
      for (std::size_t o = 0; o < 2; ++o) {
        std::copy(dout + o * n + v0, dout + o * n + v0 + count, delta.data() + o * kHeadChunk);
      }
      T* part = dkernel ? partial.data() + ch * n_params : nullptr;
      for (std::size_t li = depth; li-- > 0;) {
        const std::size_t in_c = lay.in(li), out_c = lay.out(li);
        const T* w = kernel + lay.offset(li);
        const T* src = li == 0 ? g + v0 : acts.data() + (li - 1) * act_stride;
        const std::size_t stride = li == 0 ? n : kHeadChunk;
        if (part) {
          T* dw = part + lay.offset(li);
          T* db = dw + out_c * in_c;
          for (std::size_t o = 0; o < out_c; ++o) {
            const T* d = delta.data() + o * kHeadChunk;
            T sb = 0;
            for (std::size_t v = 0; v < count; ++v) sb += d[v];
            db[o] += sb;
            for (std::size_t i = 0; i < in_c; ++i) {
              const T* s = src + i * stride;
              T sw = 0;
              for (std::size_t v = 0; v < count; ++v) sw += d[v] * s[v];
              dw[o * in_c + i] += sw;
            }
          }
        }
        if (li == 0 && !dg) break;
        for (std::size_t i = 0; i < in_c; ++i) {
          T* nx = next.data() + i * kHeadChunk;
          std::fill(nx, nx + count, T(0));
          for (std::size_t o = 0; o < out_c; ++o) {
            const T wi = w[o * in_c + i];
            const T* d = delta.data() + o * kHeadChunk;
            for (std::size_t v = 0; v < count; ++v) nx[v] += wi * d[v];
          }
        }
        if (li == 0) {
          for (std::size_t i = 0; i < in_c; ++i) {
            T* dgi = dg + i * n + v0;
            const T* nx = next.data() + i * kHeadChunk;
            for (std::size_t v = 0; v < count; ++v) dgi[v] += nx[v];
          }
        } else {
          if (relu) {
            const T* act = acts.data() + (li - 1) * act_stride;
            for (std::size_t i = 0; i < in_c; ++i) {
              T* nx = next.data() + i * kHeadChunk;
              const T* ai = act + i * kHeadChunk;
              for (std::size_t v = 0; v < count; ++v) {
                if (!(ai[v] > T(0))) nx[v] = T(0);
              }
            }
          }
          std::swap(delta, next);
        }
      }
    }
  }
  if (dkernel) {
    for (std::size_t ch = 0; ch < chunks; ++ch) {
      const T* part = partial.data() + ch * n_params;
      for (std::size_t i = 0; i < n_params; ++i) dkernel[i] += part[i];
    }
  }
}

#define DODNET_INSTANTIATE_KERNELS(T)                                                             \
  template void conv3d_forward<T>(const T*, const T*, const T*, const ConvGeometry&, T*);         \
  template void conv3d_backward<T>(const T*, const T*, const T*, const ConvGeometry&, T*, T*, T*); \
  template void conv1x1_forward<T>(const T*, const T*, const T*, std::size_t, std::size_t,        \
                                   std::size_t, T*);                                              \
  template void conv1x1_backward<T>(const T*, const T*, const T*, std::size_t, std::size_t,       \
                                    std::size_t, T*, T*, T*);                                     \
  template void instance_norm_forward<T>(const T*, const T*, const T*, std::size_t, std::size_t,  \
                                         T, T*, T*, T*);                                          \
  template void instance_norm_backward<T>(const T*, const T*, const T*, const T*, const T*,       \
                                          std::size_t, std::size_t, T*, T*, T*);                  \
  template void layer_norm_forward<T>(const T*, const T*, const T*, std::size_t, std::size_t, T,  \
                                      T*, T*, T*);                                                \
  template void layer_norm_backward<T>(const T*, const T*, const T*, const T*, const T*,          \
                                       std::size_t, std::size_t, T*, T*, T*);                     \
  template void upsample2x_forward<T>(const T*, std::size_t, Grid3, T*);                          \
  template void upsample2x_backward<T>(const T*, std::size_t, Grid3, T*);                         \
  template void trilinear_sample_forward<T>(const T*, std::size_t, Grid3, const T*, std::size_t,  \
                                            T*);                                                  \
  template void trilinear_sample_backward<T>(const T*, std::size_t, Grid3, const T*,              \
                                             std::size_t, const T*, T*, T*);                      \
  template void msda_forward<T>(const T*, std::span<const LevelGrid>, const T*, const T*,         \
                                const T*, const MsdaDims&, T*);                                   \
  template void msda_backward<T>(const T*, std::span<const LevelGrid>, const T*, const T*,        \
                                 const T*, const MsdaDims&, const T*, T*, T*, T*, T*);            \
  template void deform_attn_forward<T>(const T*, Grid3, const T*, const T*, const T*,             \
                                       std::size_t, std::size_t, std::size_t, std::size_t, T*);   \
  template void dynamic_head_forward<T>(const T*, std::size_t, const T*, std::size_t,             \
                                        std::size_t, bool, T*);                                   \
  template void dynamic_head_backward<T>(const T*, std::size_t, const T*, std::size_t,            \
                                         std::size_t, bool, const T*, T*, T*);

DODNET_INSTANTIATE_KERNELS(float)
DODNET_INSTANTIATE_KERNELS(double)

}  // namespace dodnet::kernels
