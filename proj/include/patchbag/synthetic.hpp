#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "patchbag/bag.hpp"
#include "patchbag/schema.hpp"

namespace patchbag {

// If a bag draws `class_a` for `task_a`, then with `probability` its label for
// `task_b` is overwritten with `class_b`. Rules apply in declaration order.
struct CorrelationRule {
  std::size_t task_a = 0;
  std::size_t class_a = 0;
  std::size_t task_b = 0;
  std::size_t class_b = 0;
  double probability = 1.0;
};

struct SynthConfig {
  TagSchema schema = TagSchema::histology();
  std::size_t dim = 64;
  std::size_t patches = 32;
  std::size_t bags = 2000;
  double signal_fraction = 0.25;
  double noise_std = 0.25;
  std::vector<CorrelationRule> correlations;
  // Optional per-task class sampling weights; empty means uniform.
  std::vector<std::vector<double>> class_weights;
  std::uint64_t seed = 7;

  // Signal patches planted per task, ceil(signal_fraction * patches).
  std::size_t signal_patches() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Unit prototype vectors, prototypes[task][class] of length dim. Pure
// function of (schema, dim, seed); generate() plants exactly these.
std::vector<std::vector<std::vector<double>>> prototypes(const SynthConfig& config);

// Each bag gets labels (uniform or weighted, then correlation rules), and for
// every task ceil(signal_fraction*M) distinct patches set to the class
// prototype plus N(0, noise_std^2) noise. All other patches are pure noise.
// Patches are assigned to tasks round-robin over a shuffled patch order.
Dataset generate(const SynthConfig& config);

struct SplitRatios {
  double train = 0.72;
  double val = 0.08;
  double test = 0.20;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Seeded shuffle, then contiguous slices of round(ratio * n) bags for train and
// val; the remainder goes to test. Throws ConfigError unless ratios are
// non-negative and sum to 1 within 1e-9.
DatasetSplits split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace patchbag
