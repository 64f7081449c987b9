#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "patchbag/graph.hpp"
#include "patchbag/image.hpp"
#include "patchbag/tensor.hpp"

namespace patchbag {

inline constexpr std::size_t kPatchSide = 224;
inline constexpr std::size_t kPoolGrid = 28;
// 28x28 grayscale block means plus per-channel mean and standard deviation.
inline constexpr std::size_t kPooledWidth = kPoolGrid * kPoolGrid + 6;

// Fixed front end of the featurizer: 8x8 block-averaged grayscale plus
// colour statistics, scaled to [0, 1]. Grayscale inputs report their single
// channel three times. Throws SizeError unless the patch is 224x224.
std::vector<double> pooled_statistics(const Image& patch);

// Two affine + ReLU layers, in -> hidden -> out.
struct FeaturizerParams {
  Tensor hidden_weight;  // in x hidden
  Tensor hidden_bias;    // hidden
  Tensor output_weight;  // hidden x out
  Tensor output_bias;    // out

  static FeaturizerParams initialize(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  std::size_t input_dim() const { return hidden_weight.rows(); }
  std::size_t output_dim() const { return output_weight.cols(); }
};

// Row-wise featurization of an M x in matrix of pooled statistics.
Tensor featurize(Graph& g, const Tensor& pooled_rows, const FeaturizerParams& params);

// Single 224x224 patch -> [out] feature.
Tensor featurize(Graph& g, const Image& patch, const FeaturizerParams& params);

// Fills a tensor with U(-sqrt(1/rows), +sqrt(1/rows)) draws.
Tensor uniform_fan_in(Shape shape, std::mt19937_64& rng);

}  // namespace patchbag
