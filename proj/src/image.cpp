#include "patchbag/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "patchbag/error.hpp"

namespace patchbag {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(c);
  }
  if (token.empty()) throw ParseError(path + ": truncated PNM header");
  return token;
}

std::size_t header_number(std::istream& in, const std::string& path, const char* field) {
  const auto token = header_token(in, path);
  try {
    std::size_t used = 0;
    const auto value = std::stoull(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw ParseError(path + ": field '" + field + "': not a number: '" + token + "'");
  }
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string name = path.string();
  const auto magic = header_token(in, name);
  std::size_t channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw ParseError(name + ": field 'magic': expected P5 or P6, got '" + magic + "'");
  Image image;
  image.width = header_number(in, name, "width");
  image.height = header_number(in, name, "height");
  const auto maxval = header_number(in, name, "maxval");
  if (maxval != 255) throw ParseError(name + ": field 'maxval': only 255 is supported");
  if (image.width == 0 || image.height == 0) throw ParseError(name + ": field 'width': empty image");
  image.channels = channels;
  image.pixels.resize(image.width * image.height * channels);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != image.pixels.size())
    throw IntegrityError(name + ": pixel data is truncated");
  return image;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3)
    throw ContractError("PNM output supports 1 or 3 channels, got " + std::to_string(image.channels));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create image " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ContractError("grayscale conversion needs 1 or 3 channels");
  Image gray(image.width, image.height, 1);
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    const double luma = 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
    gray.pixels[i] = static_cast<std::uint8_t>(std::lround(std::min(255.0, luma)));
  }
  return gray;
}

}  // namespace patchbag
