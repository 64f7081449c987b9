#include "patchbag/checkpoint.hpp"

#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "manifest.hpp"
#include "patchbag/error.hpp"

namespace patchbag {

namespace {

constexpr const char* kMagic = "patchbag-checkpoint";
constexpr std::uint64_t kFormatVersion = 1;

Shape parse_shape(detail::ManifestReader& in, const std::string& text) {
  Shape shape;
  std::istringstream parts(text);
  std::string item;
  while (std::getline(parts, item, 'x')) shape.push_back(in.integer(item, "shape"));
  if (shape.empty()) in.fail("shape", "empty shape");
  for (auto e : shape)
    if (e == 0) in.fail("shape", "zero extent in " + text);
  return shape;
}

std::string shape_text(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& dir) {
  params.validate();
  detail::ensure_directory(dir);
  const auto& d = params.dims;
  std::ostringstream manifest;
  manifest << kMagic << '\t' << kFormatVersion << '\n'
           << "variant\t" << to_string(d.variant) << '\n'
           << "heads\t" << d.heads << '\n'
           << "feature_dim\t" << d.feature_dim << '\n'
           << "head_hidden\t" << d.head_hidden << '\n'
           << "tag_hidden\t" << d.tag_hidden << '\n'
           << "featurizer_hidden\t" << d.featurizer_hidden << '\n'
           << "input_dim\t" << d.input_dim << '\n'
           << "seed\t" << params.seed << '\n';
  detail::write_schema(manifest, params.schema);
  const auto named = params.parameters();
  manifest << "matrices\t" << named.size() << '\n';
  for (const auto& [name, tensor] : named) {
    std::vector<unsigned char> blob;
    detail::append_f64_le(blob, tensor.data());
    const std::string file = name + ".bin";
    detail::write_file(dir / file, blob);
    manifest << "matrix\t" << name << '\t' << shape_text(tensor.shape()) << '\t' << file << '\t'
             << detail::hex(detail::checksum(blob)) << '\n';
  }
  detail::write_text(dir / "manifest", manifest.str());
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  detail::ManifestReader in(dir / "manifest");
  const auto header = in.expect(kMagic);
  if (in.integer(header[1], "format_version") != kFormatVersion)
    in.fail("format_version", "unsupported version " + header[1]);

  ModelDims dims;
  const auto variant = in.expect("variant");
  try {
    dims.variant = parse_variant(variant[1]);
  } catch (const ConfigError& e) {
    in.fail("variant", e.what());
  }
  dims.heads = in.scalar("heads");
  dims.feature_dim = in.scalar("feature_dim");
  dims.head_hidden = in.scalar("head_hidden");
  dims.tag_hidden = in.scalar("tag_hidden");
  dims.featurizer_hidden = in.scalar("featurizer_hidden");
  dims.input_dim = in.scalar("input_dim");
  const auto seed = in.scalar("seed");
  TagSchema schema = detail::read_schema(in);
  try {
    dims.validate();
  } catch (const ConfigError& e) {
    in.fail("dims", e.what());
  }

  // Shapes and names come from a freshly initialized model; the blobs then
  // overwrite every value.
  ModelParams params = ModelParams::initialize(dims, schema, seed);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : params.parameters()) by_name.emplace(name, tensor);

  const auto count = in.scalar("matrices");
  if (count != by_name.size())
    in.fail("matrices", "expected " + std::to_string(by_name.size()) + " matrices, manifest lists " +
                            std::to_string(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    auto f = in.expect("matrix", 5);
    auto it = by_name.find(f[1]);
    if (it == by_name.end()) in.fail("matrix", "unknown matrix '" + f[1] + "'");
    if (parse_shape(in, f[2]) != it->second.shape())
      in.fail("shape", "matrix " + f[1] + " has shape " + f[2] + ", model expects " +
                           to_string(it->second.shape()));
    if (f[3].find('/') != std::string::npos || f[3].find('\\') != std::string::npos)
      in.fail("file", "blob name must be a plain file name");
    const auto crc = in.hex32(f[4], "checksum");
    const auto blob = detail::read_file(dir / f[3]);
    if (blob.size() != it->second.size() * 8)
      throw IntegrityError("matrix " + f[1] + " blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                           std::to_string(it->second.size() * 8));
    if (detail::checksum(blob) != crc) throw IntegrityError("checksum mismatch for matrix " + f[1]);
    const auto values = detail::decode_f64_le(blob);
    std::copy(values.begin(), values.end(), it->second.mutable_data().begin());
    by_name.erase(it);
  }
  if (!in.done()) in.fail(in.peek_key(), "unexpected trailing line");
  params.validate();
  return params;
}

}  // namespace patchbag
