#pragma once

#include <filesystem>

#include "patchbag/model.hpp"

namespace patchbag {

// Checkpoint directory: a text `manifest` (format version, dims, variant,
// seed, schema, and one line per matrix with its shape, blob file and CRC-32)
// plus one little-endian f64 row-major blob per named matrix.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& dir);

// Bit-exact inverse of save_checkpoint. Throws ParseError, IntegrityError or
// IoError on a damaged checkpoint.
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace patchbag
