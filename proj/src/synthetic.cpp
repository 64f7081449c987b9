#include "patchbag/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <iomanip>

#include "patchbag/error.hpp"

namespace patchbag {

std::size_t SynthConfig::signal_patches() const {
  return static_cast<std::size_t>(std::ceil(signal_fraction * static_cast<double>(patches) - 1e-12));
}

void SynthConfig::validate() const {
  schema.validate();
  if (dim == 0) throw ConfigError("dim must be positive");
  if (patches == 0) throw ConfigError("patches must be positive");
  if (bags == 0) throw ConfigError("bags must be positive");
  if (!(signal_fraction > 0.0 && signal_fraction <= 1.0))
    throw ConfigError("signal_fraction must lie in (0, 1]");
  if (!(noise_std > 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be positive");
  if (signal_fraction * static_cast<double>(patches) < 1.0)
    throw ConfigError("signal_fraction * patches must be at least 1");
  if (signal_patches() * schema.task_count() > patches)
    throw ConfigError("signal_fraction too large: " + std::to_string(schema.task_count()) + " tasks x " +
                      std::to_string(signal_patches()) + " signal patches exceed " + std::to_string(patches) +
                      " patches");
  for (std::size_t i = 0; i < correlations.size(); ++i) {
    const auto& r = correlations[i];
    const std::string field = "correlations[" + std::to_string(i) + "]";
    if (r.task_a >= schema.task_count() || r.task_b >= schema.task_count())
      throw ConfigError(field + " refers to an unknown task");
    if (r.class_a >= schema.class_count(r.task_a) || r.class_b >= schema.class_count(r.task_b))
      throw ConfigError(field + " refers to an unknown class");
    if (!(r.probability >= 0.0 && r.probability <= 1.0))
      throw ConfigError(field + ".probability must lie in [0, 1]");
  }
  if (!class_weights.empty()) {
    if (class_weights.size() != schema.task_count())
      throw ConfigError("class_weights needs one list per task");
    for (std::size_t k = 0; k < class_weights.size(); ++k) {
      const auto& w = class_weights[k];
      if (w.size() != schema.class_count(k))
        throw ConfigError("class_weights[" + std::to_string(k) + "] needs one weight per class");
      if (std::any_of(w.begin(), w.end(), [](double v) { return !(v >= 0.0) || !std::isfinite(v); }) ||
          std::accumulate(w.begin(), w.end(), 0.0) <= 0.0)
        throw ConfigError("class_weights[" + std::to_string(k) + "] must be non-negative with a positive sum");
    }
  }
}

namespace {

using Prototypes = std::vector<std::vector<std::vector<double>>>;

Prototypes draw_prototypes(const SynthConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Prototypes out(config.schema.task_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t c = 0; c < config.schema.class_count(k); ++c) {
      std::vector<double> v(config.dim);
      double norm = 0.0;
      while (norm < 1e-12) {
        for (auto& x : v) x = normal(rng);
        norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      }
      for (auto& x : v) x /= norm;
      out[k].push_back(std::move(v));
    }
  }
  return out;
}

std::string bag_name(std::size_t index, std::size_t total) {
  std::ostringstream out;
  out << "bag" << std::setw(static_cast<int>(std::to_string(total).size())) << std::setfill('0') << index;
  return out.str();
}

}  // namespace

Prototypes prototypes(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return draw_prototypes(config, rng);
}

Dataset generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const Prototypes protos = draw_prototypes(config, rng);
  const std::size_t K = config.schema.task_count();
  const std::size_t M = config.patches;
  const std::size_t D = config.dim;
  const std::size_t planted = config.signal_patches();

  std::vector<std::discrete_distribution<std::size_t>> label_dists;
  for (std::size_t k = 0; k < K; ++k) {
    const std::vector<double> weights = config.class_weights.empty()
                                            ? std::vector<double>(config.schema.class_count(k), 1.0)
                                            : config.class_weights[k];
    label_dists.emplace_back(weights.begin(), weights.end());
  }
  std::normal_distribution<double> noise(0.0, config.noise_std);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  Dataset data;
  data.schema = config.schema;
  data.dim = D;
  data.bags.reserve(config.bags);
  std::vector<std::size_t> order(M);
  for (std::size_t b = 0; b < config.bags; ++b) {
    PatchBag bag;
    bag.id = bag_name(b, config.bags);
    bag.patches = M;
    bag.dim = D;
    for (std::size_t k = 0; k < K; ++k) bag.labels.push_back(label_dists[k](rng));
    for (const auto& rule : config.correlations) {
      if (bag.labels[rule.task_a] != rule.class_a) continue;
      // Always draw so the stream does not depend on the label outcome.
      const double u = coin(rng);
      if (u < rule.probability) bag.labels[rule.task_b] = rule.class_b;
    }

    bag.features.resize(M * D);
    for (auto& v : bag.features) v = noise(rng);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < planted * K; ++j) {
      const std::size_t task = j % K;
      const auto& proto = protos[task][bag.labels[task]];
      double* row = bag.features.data() + order[j] * D;
      for (std::size_t d = 0; d < D; ++d) row[d] += proto[d];
    }
    data.bags.push_back(std::move(bag));
  }
  return data;
}

DatasetSplits split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  for (auto [name, r] : {std::pair{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(std::string("split ratio ") + name + " must lie in [0, 1]");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios (train, val, test) must sum to 1");

  const std::size_t n = dataset.size();
  std::vector<std::size_t> index(n);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(index.begin(), index.end(), rng);

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n))));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));

  DatasetSplits out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) {
    part->schema = dataset.schema;
    part->dim = dataset.dim;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& part = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    part.bags.push_back(dataset.bags[index[i]]);
  }
  return out;
}

}  // namespace patchbag
