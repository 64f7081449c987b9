#include "patchbag/preprocess.hpp"

#include <algorithm>
#include <random>

#include "patchbag/error.hpp"
#include "patchbag/featurizer.hpp"

namespace patchbag {

GrayHistogram histogram(const Image& gray) {
  if (gray.channels != 1) throw ContractError("histogram expects a single-channel image");
  GrayHistogram hist{};
  for (auto v : gray.pixels) ++hist[v];
  return hist;
}

OtsuResult otsu_threshold(const GrayHistogram& hist) {
  std::uint64_t total = 0, weighted = 0;
  int occupied = 0, only = 0;
  for (int v = 0; v < 256; ++v) {
    total += hist[v];
    weighted += hist[v] * static_cast<std::uint64_t>(v);
    if (hist[v]) {
      ++occupied;
      only = v;
    }
  }
  if (total == 0) throw DegenerateInputError("otsu_threshold: histogram is empty");
  if (occupied == 1) return {only, true};

  const double n = static_cast<double>(total);
  std::uint64_t below = 0, below_sum = 0;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    below += hist[t];
    below_sum += hist[t] * static_cast<std::uint64_t>(t);
    const std::uint64_t above = total - below;
    double variance = 0.0;
    if (below > 0 && above > 0) {
      const double w0 = static_cast<double>(below) / n;
      const double w1 = static_cast<double>(above) / n;
      const double m0 = static_cast<double>(below_sum) / static_cast<double>(below);
      const double m1 = static_cast<double>(weighted - below_sum) / static_cast<double>(above);
      variance = w0 * w1 * (m0 - m1) * (m0 - m1);
    }
    if (variance > best) {
      best = variance;
      best_t = t;
    }
  }
  return {best_t, false};
}

ForegroundMask foreground_mask(const Image& image) {
  const Image gray = to_grayscale(image);
  const OtsuResult otsu = otsu_threshold(histogram(gray));
  ForegroundMask mask{gray.width, gray.height, std::vector<std::uint8_t>(gray.pixels.size(), 0)};
  if (otsu.degenerate) return mask;
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) mask.values[i] = gray.pixels[i] <= otsu.threshold ? 1 : 0;
  return mask;
}

std::vector<Window> valid_windows(const ForegroundMask& mask, std::size_t side) {
  std::vector<Window> out;
  if (side == 0 || side > mask.width || side > mask.height) return out;
  const std::size_t w = mask.width, h = mask.height;
  // Summed-area table with a zero border.
  std::vector<std::uint64_t> sat((w + 1) * (h + 1), 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      sat[(y + 1) * (w + 1) + x + 1] =
          mask.values[y * w + x] + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
  const std::uint64_t area = static_cast<std::uint64_t>(side) * side;
  for (std::size_t y = 0; y + side <= h; ++y)
    for (std::size_t x = 0; x + side <= w; ++x) {
      const std::uint64_t inside = sat[(y + side) * (w + 1) + x + side] - sat[y * (w + 1) + x + side] -
                                   sat[(y + side) * (w + 1) + x] + sat[y * (w + 1) + x];
      if (2 * inside >= area) out.push_back({x, y});
    }
  return out;
}

std::vector<PatchImage> sample_patches(const Image& image, const ForegroundMask& mask, std::size_t count,
                                       std::size_t side, std::uint64_t seed) {
  if (mask.width != image.width || mask.height != image.height)
    throw DimensionError("mask size does not match image size");
  auto windows = valid_windows(mask, side);
  if (windows.size() < count)
    throw InsufficientForegroundError("only " + std::to_string(windows.size()) + " valid " + std::to_string(side) +
                                          "px windows, need " + std::to_string(count),
                                      windows.size());
  std::mt19937_64 rng(seed);
  std::vector<PatchImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, windows.size() - 1);
    std::swap(windows[i], windows[pick(rng)]);
    out.push_back({crop(image, windows[i].x, windows[i].y, side, side), windows[i], {}});
  }
  return out;
}

Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t width, std::size_t height) {
  if (x + width > image.width || y + height > image.height)
    throw SizeError("crop window exceeds image bounds");
  Image out(width, height, image.channels);
  const std::size_t row = width * image.channels;
  for (std::size_t r = 0; r < height; ++r)
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(((y + r) * image.width + x) * image.channels), row,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * row));
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
  return out;
}

Image flip_vertical(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(x, image.height - 1 - y, c) = image.at(x, y, c);
  return out;
}

Image rotate_quarter_turns(const Image& image, int k) {
  k = ((k % 4) + 4) % 4;
  Image current = image;
  for (int turn = 0; turn < k; ++turn) {
    Image out(current.height, current.width, current.channels);
    for (std::size_t y = 0; y < current.height; ++y)
      for (std::size_t x = 0; x < current.width; ++x)
        for (std::size_t c = 0; c < current.channels; ++c) out.at(y, current.width - 1 - x, c) = current.at(x, y, c);
    current = std::move(out);
  }
  return current;
}

PatchImage apply_augmentation(const PatchImage& patch, const AugmentLog& plan) {
  const Image& src = patch.pixels;
  if (src.width < kPatchSide || src.height < kPatchSide)
    throw SizeError("augmentation needs at least 224x224, got " + std::to_string(src.width) + "x" +
                    std::to_string(src.height));
  PatchImage out;
  out.source = patch.source;
  out.augmentations = patch.augmentations;
  out.pixels = crop(src, plan.crop_x, plan.crop_y, kPatchSide, kPatchSide);
  if (plan.flip_horizontal) out.pixels = flip_horizontal(out.pixels);
  if (plan.flip_vertical) out.pixels = flip_vertical(out.pixels);
  out.pixels = rotate_quarter_turns(out.pixels, plan.quarter_turns);
  out.augmentations.push_back(plan);
  return out;
}

PatchImage augment(const PatchImage& patch, std::uint64_t seed) {
  const Image& src = patch.pixels;
  if (src.width < kPatchSide || src.height < kPatchSide)
    throw SizeError("augmentation needs at least 224x224, got " + std::to_string(src.width) + "x" +
                    std::to_string(src.height));
  std::mt19937_64 rng(seed);
  AugmentLog plan;
  plan.crop_x = std::uniform_int_distribution<std::size_t>(0, src.width - kPatchSide)(rng);
  plan.crop_y = std::uniform_int_distribution<std::size_t>(0, src.height - kPatchSide)(rng);
  std::bernoulli_distribution coin(0.5);
  plan.flip_horizontal = coin(rng);
  plan.flip_vertical = coin(rng);
  plan.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
  return apply_augmentation(patch, plan);
}

}  // namespace patchbag
