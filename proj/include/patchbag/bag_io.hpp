#pragma once

#include <filesystem>

#include "patchbag/bag.hpp"
#include "patchbag/schema.hpp"

namespace patchbag {

// Writes `dir/manifest` (format version, schema, one line per bag with id, M,
// blob offset, labels, CRC-32) and `dir/features.bin`, the little-endian f64
// features of all bags concatenated row-major.
void write_bags(const Dataset& dataset, const std::filesystem::path& dir);

// Reads a directory written by write_bags. Throws ParseError for a malformed
// manifest, IntegrityError when the blob is short, long, or fails a checksum,
// and SchemaMismatchError when `expected` is given and differs.
Dataset read_bags(const std::filesystem::path& dir, const TagSchema* expected = nullptr);

}  // namespace patchbag
