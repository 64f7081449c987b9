#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchbag/schema.hpp"
#include "patchbag/synthetic.hpp"
#include "patchbag/train.hpp"

namespace patchbag::cli {

struct PreprocessOptions {
  std::optional<std::filesystem::path> slides;  // tab-separated slide list
  std::size_t patches = 32;
  std::size_t window = 512;
  bool augment = true;
};

struct AblationArm {
  std::string name;
  std::size_t heads = 0;
  Variant variant = Variant::gated;
};

struct AblationOptions {
  std::vector<AblationArm> arms;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

// Everything a subcommand may need. Built from defaults, then a JSON config
// file, then command-line flags (flags win).
struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> checkpoint;

  TagSchema schema = TagSchema::histology();
  SynthConfig synth;
  SplitRatios split;
  TrainConfig train;
  PreprocessOptions preprocess;
  bool export_svg = true;
  AblationOptions ablation;

  RunConfig();
  // Propagates the shared seed and schema into the module configs and
  // validates all of them. Messages name the offending config field.
  void finalize();
  std::string to_json() const;
};

// Throws ConfigError for unreadable JSON, wrong value types, and unknown keys.
RunConfig load_config(const std::filesystem::path& path);

std::vector<AblationArm> default_arms();
AblationArm parse_arm(const std::string& name);

}  // namespace patchbag::cli
