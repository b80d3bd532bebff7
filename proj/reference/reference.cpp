#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ref {

Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  return c;
}

Vec conv3d(const Vec& x, const Vec& w, const Vec& bias, std::size_t ci, std::size_t co, Dims in,
           std::size_t k, std::size_t stride, std::size_t pad, Dims* out_dims) {
  Dims out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * pad - k) / stride + 1;
  if (out_dims) *out_dims = out;
  const std::size_t nout = out[0] * out[1] * out[2];
  Vec y(co * nout, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t z = 0; z < out[0]; ++z)
      for (std::size_t r = 0; r < out[1]; ++r)
        for (std::size_t c = 0; c < out[2]; ++c) {
          double s = bias.empty() ? 0.0 : bias[o];
          for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t kz = 0; kz < k; ++kz)
              for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const long iz = long(z * stride + kz) - long(pad);
                  const long iy = long(r * stride + ky) - long(pad);
                  const long ix = long(c * stride + kx) - long(pad);
                  if (iz < 0 || iy < 0 || ix < 0 || iz >= long(in[0]) || iy >= long(in[1]) || ix >= long(in[2]))
                    continue;
                  const double xv = x[((i * in[0] + iz) * in[1] + iy) * in[2] + ix];
                  s += w[(((o * ci + i) * k + kz) * k + ky) * k + kx] * xv;
                }
          y[((o * out[0] + z) * out[1] + r) * out[2] + c] = s;
        }
  return y;
}

Vec conv1x1(const Vec& x, const Vec& w, const Vec& bias, std::size_t ci, std::size_t co, std::size_t n) {
  Vec y(co * n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t o = 0; o < co; ++o) {
      double s = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < ci; ++i) s += w[o * ci + i] * x[i * n + v];
      y[o * n + v] = s;
    }
  return y;
}

Vec instance_norm(const Vec& x, const Vec& gamma, const Vec& beta, std::size_t channels, std::size_t n,
                  double eps) {
  Vec y(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x[c * n + i];
    mean /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (x[c * n + i] - mean) * (x[c * n + i] - mean);
    var /= double(n);
    for (std::size_t i = 0; i < n; ++i)
      y[c * n + i] = gamma[c] * (x[c * n + i] - mean) / std::sqrt(var + eps) + beta[c];
  }
  return y;
}

Vec softmax_rows(const Vec& x, std::size_t rows, std::size_t cols) {
  Vec y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[r * cols + c] - mx);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = std::exp(x[r * cols + c] - mx) / s;
  }
  return y;
}

namespace {
// Source position of output index o along an axis of n input voxels.
void taps(std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
  const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, double(n - 1));
  i0 = std::size_t(src);
  i1 = std::min(i0 + 1, n - 1);
  f = src - double(i0);
}
}  // namespace

Vec upsample2x(const Vec& x, std::size_t channels, Dims in) {
  const Dims out{2 * in[0], 2 * in[1], 2 * in[2]};
  Vec y(channels * out[0] * out[1] * out[2]);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t z = 0; z < out[0]; ++z)
      for (std::size_t r = 0; r < out[1]; ++r)
        for (std::size_t q = 0; q < out[2]; ++q) {
          std::size_t z0, z1, r0, r1, q0, q1;
          double fz, fr, fq;
          taps(z, in[0], z0, z1, fz);
          taps(r, in[1], r0, r1, fr);
          taps(q, in[2], q0, q1, fq);
          auto at = [&](std::size_t a, std::size_t b, std::size_t e) {
            return x[((c * in[0] + a) * in[1] + b) * in[2] + e];
          };
          double s = 0;
          s += (1 - fz) * (1 - fr) * (1 - fq) * at(z0, r0, q0) + (1 - fz) * (1 - fr) * fq * at(z0, r0, q1);
          s += (1 - fz) * fr * (1 - fq) * at(z0, r1, q0) + (1 - fz) * fr * fq * at(z0, r1, q1);
          s += fz * (1 - fr) * (1 - fq) * at(z1, r0, q0) + fz * (1 - fr) * fq * at(z1, r0, q1);
          s += fz * fr * (1 - fq) * at(z1, r1, q0) + fz * fr * fq * at(z1, r1, q1);
          y[((c * out[0] + z) * out[1] + r) * out[2] + q] = s;
        }
  return y;
}

double trilinear(const double* vol, Dims g, double z, double y, double x) {
  const double z0 = std::floor(z), y0 = std::floor(y), x0 = std::floor(x);
  double s = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double iz = z0 + a, iy = y0 + b, ix = x0 + c;
        if (iz < 0 || iy < 0 || ix < 0 || iz >= double(g[0]) || iy >= double(g[1]) || ix >= double(g[2])) continue;
        const double wgt = (1 - std::abs(z - iz)) * (1 - std::abs(y - iy)) * (1 - std::abs(x - ix));
        s += wgt * vol[(std::size_t(iz) * g[1] + std::size_t(iy)) * g[2] + std::size_t(ix)];
      }
  return s;
}

Vec msda(const Vec& value, const std::vector<Level>& levels, const Vec& ref, const Vec& offsets,
         const Vec& attn, std::size_t queries, std::size_t channels, std::size_t heads, std::size_t points) {
  const std::size_t dh = channels / heads, L = levels.size();
  Vec out(queries * channels, 0.0);
  for (std::size_t q = 0; q < queries; ++q)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::size_t l = 0; l < L; ++l) {
          const Dims g = levels[l].grid;
          const std::size_t nv = g[0] * g[1] * g[2];
          // This head's channel c of level l as a contiguous volume.
          Vec vol(nv);
          for (std::size_t t = 0; t < nv; ++t) vol[t] = value[(levels[l].start + t) * channels + h * dh + c];
          for (std::size_t k = 0; k < points; ++k) {
            const std::size_t s = ((q * heads + h) * L + l) * points + k;
            // Rescale the normalised reference onto level l, then move to
            // voxel-centre coordinates.
            double pos[3];
            for (int a = 0; a < 3; ++a) {
              const double sigma = ref[q * 3 + a] * double(g[a]);
              pos[a] = sigma + offsets[s * 3 + a] - 0.5;
            }
            acc += attn[s] * trilinear(vol.data(), g, pos[0], pos[1], pos[2]);
          }
        }
        out[q * channels + h * dh + c] = acc;
      }
  return out;
}

Vec dynamic_head(const Vec& g, std::size_t n, const Vec& kernel, std::size_t width, std::size_t depth) {
  Vec out(2 * n);
  for (std::size_t v = 0; v < n; ++v) {
    Vec act(width);
    for (std::size_t c = 0; c < width; ++c) act[c] = g[c * n + v];
    std::size_t off = 0;
    for (std::size_t layer = 0; layer < depth; ++layer) {
      const std::size_t rows = layer + 1 == depth ? 2 : width;
      Vec next(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        double s = kernel[off + rows * width + r];
        for (std::size_t c = 0; c < width; ++c) s += kernel[off + r * width + c] * act[c];
        next[r] = layer + 1 == depth ? s : std::max(s, 0.0);
      }
      off += rows * width + rows;
      act = next;
    }
    if (off != kernel.size()) throw std::invalid_argument("dynamic_head: kernel length mismatch");
    out[v] = act[0];
    out[n + v] = act[1];
  }
  return out;
}

Vec self_attention(const Vec& q, const Vec& k, const Vec& v, std::size_t nq, std::size_t nk, std::size_t d,
                   std::size_t heads, const AttnWeights& w) {
  auto project = [&](const Vec& x, std::size_t rows, const Vec& wt, const Vec& b) {
    Vec y(rows * d);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < d; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < d; ++i) s += wt[o * d + i] * x[r * d + i];
        y[r * d + o] = s;
      }
    return y;
  };
  const Vec Q = project(q, nq, w.wq, w.bq), K = project(k, nk, w.wk, w.bk), V = project(v, nk, w.wv, w.bv);
  const std::size_t dh = d / heads;
  Vec ctx(nq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < nq; ++i) {
      Vec score(nk);
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i * d + h * dh + c] * K[j * d + h * dh + c];
        score[j] = s / std::sqrt(double(dh));
      }
      const Vec p = softmax_rows(score, 1, nk);
      for (std::size_t c = 0; c < dh; ++c) {
        double s = 0;
        for (std::size_t j = 0; j < nk; ++j) s += p[j] * V[j * d + h * dh + c];
        ctx[i * d + h * dh + c] = s;
      }
    }
  return project(ctx, nq, w.wo, w.bo);
}

double masked_loss(const Vec& logits, const std::vector<std::uint8_t>& labels, bool organ, bool tumor,
                   double eps) {
  const std::size_t n = labels.size();
  const bool labeled[2] = {organ, tumor};
  double loss = 0;
  for (int ch = 0; ch < 2; ++ch) {
    if (!labeled[ch]) continue;
    double num = 0, den = 0, ce = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = 1.0 / (1.0 + std::exp(-logits[ch * n + i]));
      p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
      const double y = ch == 0 ? (labels[i] >= 1) : (labels[i] == 2);
      num += p * y;
      den += p + y + eps;
      ce += y * std::log(p) + (1 - y) * std::log(1 - p);
    }
    loss -= 2 * num / den + ce / double(n);
  }
  return loss;
}

double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] != 0) && (b[i] != 0);
    sa += a[i] != 0;
    sb += b[i] != 0;
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * double(inter) / double(sa + sb);
}

namespace {
std::vector<std::array<long, 3>> surface(const std::vector<std::uint8_t>& m, Dims s) {
  auto inside = [&](long z, long y, long x) {
    if (z < 0 || y < 0 || x < 0 || z >= long(s[0]) || y >= long(s[1]) || x >= long(s[2])) return false;
    return m[(std::size_t(z) * s[1] + std::size_t(y)) * s[2] + std::size_t(x)] != 0;
  };
  std::vector<std::array<long, 3>> pts;
  for (long z = 0; z < long(s[0]); ++z)
    for (long y = 0; y < long(s[1]); ++y)
      for (long x = 0; x < long(s[2]); ++x) {
        if (!inside(z, y, x)) continue;
        const bool edge = !inside(z - 1, y, x) || !inside(z + 1, y, x) || !inside(z, y - 1, x) ||
                          !inside(z, y + 1, x) || !inside(z, y, x - 1) || !inside(z, y, x + 1);
        if (edge) pts.push_back({z, y, x});
      }
  return pts;
}

double directed(const std::vector<std::array<long, 3>>& a, const std::vector<std::array<long, 3>>& b) {
  double worst = 0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dz = double(p[0] - q[0]), dy = double(p[1] - q[1]), dx = double(p[2] - q[2]);
      best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
    }
    worst = std::max(worst, best);
  }
  return worst;
}
}  // namespace

double hausdorff(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, Dims shape) {
  const auto sa = surface(a, shape), sb = surface(b, shape);
  if (sa.empty() || sb.empty()) throw std::invalid_argument("hausdorff: empty mask");
  return std::max(directed(sa, sb), directed(sb, sa));
}

}  // namespace ref
