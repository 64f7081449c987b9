#include "patchbag/featurizer.hpp"

#include <cmath>

#include "patchbag/error.hpp"

namespace patchbag {

Tensor uniform_fan_in(Shape shape, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(shape.front()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(element_count(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

std::vector<double> pooled_statistics(const Image& patch) {
  if (patch.width != kPatchSide || patch.height != kPatchSide)
    throw SizeError("featurizer expects a 224x224 patch, got " + std::to_string(patch.width) + "x" +
                    std::to_string(patch.height));
  if (patch.channels != 1 && patch.channels != 3)
    throw SizeError("featurizer expects 1 or 3 channels, got " + std::to_string(patch.channels));

  const Image gray = patch.channels == 1 ? patch : to_grayscale(patch);
  constexpr std::size_t block = kPatchSide / kPoolGrid;
  std::vector<double> out;
  out.reserve(kPooledWidth);
  for (std::size_t by = 0; by < kPoolGrid; ++by)
    for (std::size_t bx = 0; bx < kPoolGrid; ++bx) {
      double acc = 0.0;
      for (std::size_t y = by * block; y < (by + 1) * block; ++y)
        for (std::size_t x = bx * block; x < (bx + 1) * block; ++x) acc += gray.at(x, y);
      out.push_back(acc / (block * block * 255.0));
    }

  const double n = static_cast<double>(kPatchSide * kPatchSide);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t channel = patch.channels == 1 ? 0 : c;
    double s = 0.0, s2 = 0.0;
    for (std::size_t y = 0; y < kPatchSide; ++y)
      for (std::size_t x = 0; x < kPatchSide; ++x) {
        const double v = patch.at(x, y, channel) / 255.0;
        s += v;
        s2 += v * v;
      }
    const double mean = s / n;
    out.push_back(mean);
    out.push_back(std::sqrt(std::max(0.0, s2 / n - mean * mean)));
  }
  return out;
}

FeaturizerParams FeaturizerParams::initialize(std::size_t in, std::size_t hidden, std::size_t out,
                                              std::mt19937_64& rng) {
  FeaturizerParams p;
  p.hidden_weight = uniform_fan_in({in, hidden}, rng);
  p.hidden_bias = Tensor::zeros({hidden}, true);
  p.output_weight = uniform_fan_in({hidden, out}, rng);
  p.output_bias = Tensor::zeros({out}, true);
  return p;
}

Tensor featurize(Graph& g, const Tensor& pooled_rows, const FeaturizerParams& params) {
  if (pooled_rows.rank() != 2 || pooled_rows.cols() != params.input_dim())
    throw DimensionError("featurizer expects rows of width " + std::to_string(params.input_dim()) + ", got " +
                         to_string(pooled_rows.shape()));
  Tensor h = relu(g, add_row(g, matmul(g, pooled_rows, params.hidden_weight), params.hidden_bias));
  return relu(g, add_row(g, matmul(g, h, params.output_weight), params.output_bias));
}

Tensor featurize(Graph& g, const Image& patch, const FeaturizerParams& params) {
  auto stats = pooled_statistics(patch);
  const std::size_t width = stats.size();
  Tensor row = Tensor::from({1, width}, std::move(stats));
  return reshape(g, featurize(g, row, params), {params.output_dim()});
}

}  // namespace patchbag
