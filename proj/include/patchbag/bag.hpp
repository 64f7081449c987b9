#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "patchbag/schema.hpp"

namespace patchbag {

// One slide: M patch feature rows (row-major, M x dim) and one class index
// per tagging task.
struct PatchBag {
  std::string id;
  std::size_t patches = 0;
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  double feature(std::size_t patch, std::size_t col) const { return features[patch * dim + col]; }

  bool operator==(const PatchBag&) const = default;
};

struct Dataset {
  TagSchema schema;
  std::size_t dim = 0;
  std::vector<PatchBag> bags;

  bool empty() const noexcept { return bags.empty(); }
  std::size_t size() const noexcept { return bags.size(); }

  // Throws on M == 0, wrong feature length, non-finite features, or labels
  // out of range for the schema.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

}  // namespace patchbag
