#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchbag/bag.hpp"
#include "patchbag/model.hpp"

namespace patchbag {

struct RankedPatch {
  std::size_t patch = 0;
  double weight = 0.0;
};

// Patches by descending weight; equal weights keep ascending patch index.
std::vector<RankedPatch> rank_patches(std::span<const double> weights);

// One attention record per bag, in dataset order.
std::vector<AttentionRecord> attention_records(const ModelParams& params, const Dataset& dataset,
                                               std::size_t threads = 1);

// Writes `out_dir/attention.csv` with columns bag_id,task,rank,patch,weight
// (weights in shortest round-trip decimal form) and, when `svg` is set, one
// `<bag_id>.svg` bar chart per bag with a row of ranked weights per task.
void export_attention(const ModelParams& params, const Dataset& dataset, const std::filesystem::path& out_dir,
                      bool svg = true, std::size_t threads = 1);

}  // namespace patchbag
