#include "patchbag/bag_io.hpp"

#include <sstream>

#include "binary_io.hpp"
#include "manifest.hpp"
#include "patchbag/error.hpp"

namespace patchbag {

namespace {

constexpr const char* kMagic = "patchbag-bags";
constexpr std::uint64_t kFormatVersion = 1;

}  // namespace

void write_bags(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  detail::ensure_directory(dir);

  std::vector<unsigned char> blob;
  std::ostringstream manifest;
  manifest << kMagic << '\t' << kFormatVersion << '\n';
  manifest << "dim\t" << dataset.dim << '\n';
  detail::write_schema(manifest, dataset.schema);
  manifest << "bags\t" << dataset.size() << '\n';
  std::size_t offset = 0;
  for (const auto& bag : dataset.bags) {
    if (bag.id.empty() || bag.id.find_first_of("\t\n\r") != std::string::npos)
      throw ConfigError("bag id '" + bag.id + "' is empty or contains a tab/newline");
    const std::size_t start = blob.size();
    detail::append_f64_le(blob, bag.features);
    const auto crc = detail::checksum(std::span(blob).subspan(start));
    manifest << "bag\t" << bag.id << '\t' << bag.patches << '\t' << offset << '\t';
    for (std::size_t k = 0; k < bag.labels.size(); ++k) manifest << (k ? "," : "") << bag.labels[k];
    manifest << '\t' << detail::hex(crc) << '\n';
    offset += bag.features.size();
  }
  detail::write_file(dir / "features.bin", blob);
  detail::write_text(dir / "manifest", manifest.str());
}

Dataset read_bags(const std::filesystem::path& dir, const TagSchema* expected) {
  detail::ManifestReader in(dir / "manifest");
  const auto header = in.expect(kMagic);
  if (in.integer(header[1], "format_version") != kFormatVersion)
    in.fail("format_version", "unsupported version " + header[1]);

  Dataset data;
  data.dim = in.scalar("dim");
  if (data.dim == 0) in.fail("dim", "must be positive");
  data.schema = detail::read_schema(in);
  if (expected && *expected != data.schema)
    throw SchemaMismatchError("bag directory " + dir.string() + " schema does not match the expected schema\n" +
                              "expected:\n" + describe(*expected) + "found:\n" + describe(data.schema));

  const auto count = in.scalar("bags");
  struct Entry {
    std::size_t offset;
    std::uint32_t crc;
  };
  std::vector<Entry> entries;
  for (std::uint64_t b = 0; b < count; ++b) {
    auto f = in.expect("bag", 6);
    PatchBag bag;
    bag.id = f[1];
    bag.patches = in.integer(f[2], "patches");
    if (bag.patches == 0) in.fail("patches", "bag " + bag.id + " has no patches");
    bag.dim = data.dim;
    entries.push_back({in.integer(f[3], "offset"), in.hex32(f[5], "checksum")});
    std::istringstream labels(f[4]);
    std::string item;
    while (std::getline(labels, item, ',')) bag.labels.push_back(in.integer(item, "labels"));
    if (bag.labels.size() != data.schema.task_count())
      in.fail("labels", "bag " + bag.id + " has " + std::to_string(bag.labels.size()) + " labels for " +
                            std::to_string(data.schema.task_count()) + " tasks");
    for (std::size_t k = 0; k < bag.labels.size(); ++k)
      if (bag.labels[k] >= data.schema.class_count(k))
        in.fail("labels", "bag " + bag.id + " label out of range for task '" + data.schema.tasks[k].name + "'");
    data.bags.push_back(std::move(bag));
  }
  if (!in.done()) in.fail(in.peek_key(), "unexpected trailing line");

  const auto blob = detail::read_file(dir / "features.bin");
  std::size_t expected_values = 0;
  for (std::size_t b = 0; b < data.bags.size(); ++b) {
    auto& bag = data.bags[b];
    const std::size_t n = bag.patches * bag.dim;
    if (entries[b].offset != expected_values)
      throw IntegrityError("bag " + bag.id + " offset " + std::to_string(entries[b].offset) +
                           " does not follow the previous bag (expected " + std::to_string(expected_values) + ")");
    if ((entries[b].offset + n) * 8 > blob.size())
      throw IntegrityError("features.bin is truncated: bag " + bag.id + " needs values [" +
                           std::to_string(entries[b].offset) + ", " + std::to_string(entries[b].offset + n) +
                           ") but the blob holds " + std::to_string(blob.size() / 8));
    const auto bytes = std::span(blob).subspan(entries[b].offset * 8, n * 8);
    if (detail::checksum(bytes) != entries[b].crc)
      throw IntegrityError("checksum mismatch for bag " + bag.id);
    bag.features = detail::decode_f64_le(bytes);
    expected_values += n;
  }
  if (expected_values * 8 != blob.size())
    throw IntegrityError("features.bin holds " + std::to_string(blob.size()) + " bytes, manifest accounts for " +
                         std::to_string(expected_values * 8));
  data.validate();
  return data;
}

}  // namespace patchbag
