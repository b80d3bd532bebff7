#pragma once

// Raw compute kernels behind the differentiable ops. Loops over independent
// outputs are OpenMP-parallel; every reduction that feeds a gradient runs in a
// fixed order so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace dodnet::kernels {

/// Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is M×K, op(B) is K×N.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

struct Grid3 {
  std::size_t d = 0, w = 0, h = 0;
  std::size_t size() const { return d * w * h; }
  bool operator==(const Grid3&) const = default;
};

struct ConvGeometry {
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t kernel = 1, stride = 1, padding = 0;
  Grid3 in, out;

  /// Throws DimensionError when the output extent would be non-positive.
  static ConvGeometry make(std::size_t in_channels, std::size_t out_channels, Grid3 in,
                           std::size_t kernel, std::size_t stride, std::size_t padding);
  std::size_t col_rows() const { return in_channels * kernel * kernel * kernel; }
};

template <typename T>
void conv3d_forward(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* y);
/// Accumulates into dx/dw/db; any of them may be null.
template <typename T>
void conv3d_backward(const T* x, const T* w, const T* dy, const ConvGeometry& g, T* dx, T* dw,
                     T* db);

/// y[co][v] = b[co] + sum_ci w[co][ci] * x[ci][v]
template <typename T>
void conv1x1_forward(const T* x, const T* w, const T* bias, std::size_t in_c, std::size_t out_c,
                     std::size_t n, T* y);
template <typename T>
void conv1x1_backward(const T* x, const T* w, const T* dy, std::size_t in_c, std::size_t out_c,
                      std::size_t n, T* dx, T* dw, T* db);

/// Per-channel normalisation over n voxels. mean/rstd receive the statistics.
template <typename T>
void instance_norm_forward(const T* x, const T* gamma, const T* beta, std::size_t channels,
                           std::size_t n, T eps, T* y, T* mean, T* rstd);
template <typename T>
void instance_norm_backward(const T* x, const T* gamma, const T* mean, const T* rstd,
                            const T* dy, std::size_t channels, std::size_t n, T* dx, T* dgamma,
                            T* dbeta);

/// Row-wise layer norm over the last axis.
template <typename T>
void layer_norm_forward(const T* x, const T* gamma, const T* beta, std::size_t rows,
                        std::size_t cols, T eps, T* y, T* mean, T* rstd);
template <typename T>
void layer_norm_backward(const T* x, const T* gamma, const T* mean, const T* rstd, const T* dy,
                         std::size_t rows, std::size_t cols, T* dx, T* dgamma, T* dbeta);

/// Trilinear x2 upsampling (half-voxel aligned, edge clamped).
template <typename T>
void upsample2x_forward(const T* x, std::size_t channels, Grid3 in, T* y);
template <typename T>
void upsample2x_backward(const T* dy, std::size_t channels, Grid3 in, T* dx);

/// Samples every channel of a C×D×W×H volume at fractional voxel coordinates
/// (z, y, x); lattice points outside the volume read as zero.
template <typename T>
void trilinear_sample_forward(const T* volume, std::size_t channels, Grid3 grid, const T* points,
                              std::size_t n_points, T* out);
template <typename T>
void trilinear_sample_backward(const T* volume, std::size_t channels, Grid3 grid, const T* points,
                               std::size_t n_points, const T* dout, T* dvolume, T* dpoints);

struct LevelGrid {
  Grid3 grid;
  std::size_t start = 0;  // first token row of this level in the value matrix
};

struct MsdaDims {
  std::size_t queries = 0;
  std::size_t model_dim = 0;
  std::size_t heads = 1;
  std::size_t levels = 1;
  std::size_t points = 1;
  std::size_t head_dim() const { return model_dim / heads; }
};

/// Multi-scale deformable sampling.
///   value   [tokens × model_dim], level l occupies rows levels[l].start .. + grid.size()
///   ref     [queries × 3] normalised (z, y, x) in [0, 1]
///   offsets [queries × heads × levels × points × 3] in level voxel units
///   attn    [queries × heads × levels × points], already normalised
///   out     [queries × model_dim]
/// Sampling location on level l: ref * extent_l - 0.5 + offset.
template <typename T>
void msda_forward(const T* value, std::span<const LevelGrid> levels, const T* ref,
                  const T* offsets, const T* attn, const MsdaDims& dims, T* out);
/// Accumulates gradients; any output pointer may be null.
template <typename T>
void msda_backward(const T* value, std::span<const LevelGrid> levels, const T* ref,
                   const T* offsets, const T* attn, const MsdaDims& dims, const T* dout,
                   T* dvalue, T* dref, T* doffsets, T* dattn);

/// Single-scale deformable attention sampling (one level, no level loop).
template <typename T>
void deform_attn_forward(const T* value, Grid3 grid, const T* ref, const T* offsets, const T* attn,
                         std::size_t queries, std::size_t model_dim, std::size_t heads,
                         std::size_t points, T* out);

/// Dynamic segmentation head: `depth` stacked 1x1x1 convolutions whose packed
/// parameters live in `kernel` (layer-major, weights row-major then bias).
/// Hidden layers are width→width, the last is width→2.
template <typename T>
void dynamic_head_forward(const T* g, std::size_t n, const T* kernel, std::size_t width,
                          std::size_t depth, bool relu, T* out);
template <typename T>
void dynamic_head_backward(const T* g, std::size_t n, const T* kernel, std::size_t width,
                           std::size_t depth, bool relu, const T* dout, T* dg, T* dkernel);

}  // namespace dodnet::kernels
