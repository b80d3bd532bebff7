#pragma once

#include <cstddef>
#include <vector>

#include "dodnet/tensor.hpp"

namespace dodnet {

/// Fixed 3D sinusoidal encoding, [(D·W·H) × d] row-major with H fastest.
/// Columns are three d/3-wide blocks for the D, W and H axes; inside a block
/// column 2k is sin(pos / 10000^(2k/(d/3))) and column 2k+1 the matching cos.
/// Throws ConfigError unless d % 6 == 0.
std::vector<double> positional_encoding(std::size_t D, std::size_t W, std::size_t H, std::size_t d);

template <typename T>
Tensor<T> encode_positions(std::size_t D, std::size_t W, std::size_t H, std::size_t d) {
  const auto v = positional_encoding(D, W, H, d);
  return Tensor<T>::from_data({D * W * H, d}, std::vector<T>(v.begin(), v.end()));
}

}  // namespace dodnet
