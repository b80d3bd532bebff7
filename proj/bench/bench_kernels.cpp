// Times the OpenMP kernels against the serial reference loops on the same
// inputs and reports the largest absolute difference.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "dodnet/kernels.hpp"
#include "dodnet/rng.hpp"
#include "dodnet/threads.hpp"
#include "reference.hpp"

using namespace dodnet;

namespace {

std::vector<double> randn(std::size_t n, Rng& rng, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return v;
}

double seconds(const std::function<void()>& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void report(const char* name, double serial, double parallel, double diff) {
  std::printf("%-16s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.2e\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel, diff);
}

}  // namespace

int main() {
  const int threads = init_threads_from_env();
  std::printf("threads: %d\n", threads);
  Rng rng(7);

  {  // 3x3x3 convolution, 16 -> 16 channels on 16x32x32
    const std::size_t ci = 16, co = 16;
    const kernels::Grid3 g{16, 32, 32};
    const auto x = randn(ci * g.size(), rng), w = randn(co * ci * 27, rng, 0.1), b = randn(co, rng);
    const auto geo = kernels::ConvGeometry::make(ci, co, g, 3, 1, 1);
    std::vector<double> fast(co * geo.out.size()), slow;
    const double tp = seconds([&] { kernels::conv3d_forward(x.data(), w.data(), b.data(), geo, fast.data()); }, 5);
    const double ts = seconds([&] { slow = ref::conv3d(x, w, b, ci, co, {g.d, g.w, g.h}, 3, 1, 1); }, 1);
    report("conv3d", ts, tp, max_diff(fast, slow));
  }
  {  // multi-scale deformable sampling, 2 levels
    const std::size_t d = 96, heads = 4, levels = 2, points = 4;
    const std::vector<kernels::LevelGrid> lv{{{4, 12, 12}, 0}, {{2, 6, 6}, 576}};
    const std::vector<ref::Level> rl{{{4, 12, 12}, 0}, {{2, 6, 6}, 576}};
    const std::size_t tokens = 576 + 72, queries = tokens;
    const auto value = randn(tokens * d, rng);
    std::vector<double> refp(queries * 3);
    for (auto& r : refp) r = rng.uniform();
    const auto off = randn(queries * heads * levels * points * 3, rng);
    std::vector<double> attn(queries * heads * levels * points);
    for (auto& a : attn) a = rng.uniform();
    const kernels::MsdaDims dims{queries, d, heads, levels, points};
    std::vector<double> fast(queries * d), slow;
    const double tp = seconds(
        [&] { kernels::msda_forward<double>(value.data(), lv, refp.data(), off.data(), attn.data(), dims, fast.data()); },
        5);
    const double ts = seconds([&] { slow = ref::msda(value, rl, refp, off, attn, queries, d, heads, points); }, 1);
    report("msda", ts, tp, max_diff(fast, slow));
  }
  {  // dynamic head, width 8, depth 3 over a 16x48x48 patch
    const std::size_t w = 8, depth = 3, n = 16 * 48 * 48;
    const auto g = randn(w * n, rng), kernel = randn(162, rng, 0.3);
    std::vector<double> fast(2 * n), slow;
    const double tp = seconds(
        [&] { kernels::dynamic_head_forward(g.data(), n, kernel.data(), w, depth, true, fast.data()); }, 5);
    const double ts = seconds([&] { slow = ref::dynamic_head(g, n, kernel, w, depth); }, 1);
    report("dynamic_head", ts, tp, max_diff(fast, slow));
  }
  {  // trilinear sampling of 32 channels at 20k points
    const std::size_t c = 32, np = 20000;
    const kernels::Grid3 g{8, 24, 24};
    const auto vol = randn(c * g.size(), rng);
    std::vector<double> pts(np * 3);
    for (std::size_t i = 0; i < np; ++i) {
      pts[3 * i] = rng.uniform(-1.0, 8.0);
      pts[3 * i + 1] = rng.uniform(-1.0, 24.0);
      pts[3 * i + 2] = rng.uniform(-1.0, 24.0);
    }
    std::vector<double> fast(c * np), slow(c * np);
    const double tp = seconds(
        [&] { kernels::trilinear_sample_forward(vol.data(), c, g, pts.data(), np, fast.data()); }, 5);
    const double ts = seconds(
        [&] {
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < np; ++p)
              slow[ch * np + p] = ref::trilinear(vol.data() + ch * g.size(), {g.d, g.w, g.h}, pts[3 * p],
                                                 pts[3 * p + 1], pts[3 * p + 2]);
        },
        1);
    report("trilinear", ts, tp, max_diff(fast, slow));
  }
  return 0;
}
