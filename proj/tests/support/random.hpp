#pragma once

#include <random>
#include <vector>

#include "patchbag/tensor.hpp"

namespace patchbag::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> values(element_count(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

// Row permutation of an M x D tensor: out[i] = in[perm[i]].
inline Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  const std::size_t cols = t.cols();
  std::vector<double> values(t.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) values[i * cols + j] = t.data()[perm[i] * cols + j];
  return Tensor::from(t.shape(), std::move(values));
}

}  // namespace patchbag::testing
