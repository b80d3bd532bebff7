#pragma once
// Serial oracles written loop by loop from the definitions. Nothing here calls
// into the optimised kernels; tests and the benchmark compare against these.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace ref {

using Vec = std::vector<double>;
using Dims = std::array<std::size_t, 3>;  // (D, W, H)

/// C[m×n] = A[m×k] · B[k×n]
Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n);

/// x [ci, D, W, H], w [co, ci, k, k, k]; zero padding.
Vec conv3d(const Vec& x, const Vec& w, const Vec& bias, std::size_t ci, std::size_t co, Dims in,
           std::size_t k, std::size_t stride, std::size_t pad, Dims* out_dims = nullptr);

/// y[co][v] = b[co] + Σ w[co][ci] x[ci][v], one voxel at a time.
Vec conv1x1(const Vec& x, const Vec& w, const Vec& bias, std::size_t ci, std::size_t co, std::size_t n);

Vec instance_norm(const Vec& x, const Vec& gamma, const Vec& beta, std::size_t channels, std::size_t n,
                  double eps);

Vec softmax_rows(const Vec& x, std::size_t rows, std::size_t cols);

/// Half-voxel aligned ×2 trilinear upsampling with edge clamping.
Vec upsample2x(const Vec& x, std::size_t channels, Dims in);

/// Value of one channel at fractional voxel coordinate (z, y, x); lattice
/// points outside the volume contribute zero.
double trilinear(const double* vol, Dims g, double z, double y, double x);

struct Level {
  Dims grid;
  std::size_t start;
};

/// Multi-scale deformable attention sampling, all loops explicit.
/// value [T × C], ref [Q × 3] in [0,1], offsets [Q×heads×L×K×3], attn [Q×heads×L×K].
Vec msda(const Vec& value, const std::vector<Level>& levels, const Vec& ref, const Vec& offsets,
         const Vec& attn, std::size_t queries, std::size_t channels, std::size_t heads, std::size_t points);

/// Dynamic head applied voxel by voxel. g [w × n], kernel packed layer-major.
Vec dynamic_head(const Vec& g, std::size_t n, const Vec& kernel, std::size_t width, std::size_t depth);

/// Multi-head attention with explicit per-head loops.
/// q [nq × d], k, v [nk × d]; weights [d × d] (out × in), biases [d].
struct AttnWeights {
  Vec wq, bq, wk, bk, wv, bv, wo, bo;
};
Vec self_attention(const Vec& q, const Vec& k, const Vec& v, std::size_t nq, std::size_t nk, std::size_t d,
                   std::size_t heads, const AttnWeights& w);

/// Joint Dice + BCE of one task's logits [2 × n], summed straight from the formula.
double masked_loss(const Vec& logits, const std::vector<std::uint8_t>& labels, bool organ, bool tumor,
                   double eps);

double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

/// All-pairs Hausdorff distance on 6-connected boundary voxels.
double hausdorff(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, Dims shape);

}  // namespace ref
