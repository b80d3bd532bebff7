#include "dodnet/posenc.hpp"

#include <cmath>

#include "dodnet/error.hpp"

namespace dodnet {

std::vector<double> positional_encoding(std::size_t D, std::size_t W, std::size_t H, std::size_t d) {
  if (d == 0 || d % 6 != 0) {
    throw ConfigError("positional encoding width " + std::to_string(d) + " is not divisible by 6");
  }
  const std::size_t block = d / 3;
  // Per-axis tables first; rows are then assembled by concatenation.
  auto axis_table = [&](std::size_t len) {
    std::vector<double> t(len * block);
    for (std::size_t pos = 0; pos < len; ++pos) {
      for (std::size_t k = 0; 2 * k < block; ++k) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(block));
        const double a = static_cast<double>(pos) / freq;
        t[pos * block + 2 * k] = std::sin(a);
        t[pos * block + 2 * k + 1] = std::cos(a);
      }
    }
    return t;
  };
  const auto td = axis_table(D), tw = axis_table(W), th = axis_table(H);
  std::vector<double> out(D * W * H * d);
  std::size_t row = 0;
  for (std::size_t z = 0; z < D; ++z) {
    for (std::size_t y = 0; y < W; ++y) {
      for (std::size_t x = 0; x < H; ++x, ++row) {
        double* r = out.data() + row * d;
        for (std::size_t c = 0; c < block; ++c) {
          r[c] = td[z * block + c];
          r[block + c] = tw[y * block + c];
          r[2 * block + c] = th[x * block + c];
        }
      }
    }
  }
  return out;
}

}  // namespace dodnet
