#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "patchbag/image.hpp"

namespace patchbag {

using GrayHistogram = std::array<std::uint64_t, 256>;

GrayHistogram histogram(const Image& gray);

struct OtsuResult {
  int threshold = 0;
  // Set when every pixel falls in one bin; `threshold` is then that value.
  bool degenerate = false;
};

// Threshold maximizing the between-class variance of {<= t} vs {> t} over all
// 256 cuts, ties going to the smallest t. Throws DegenerateInputError for an
// empty histogram.
OtsuResult otsu_threshold(const GrayHistogram& hist);

// Foreground (tissue) mask: 1 where gray <= threshold. A degenerate histogram
// yields an all-background mask since there is no contrast to separate.
struct ForegroundMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> values;

  bool at(std::size_t x, std::size_t y) const { return values[y * width + x] != 0; }
};

ForegroundMask foreground_mask(const Image& image);

struct Window {
  std::size_t x = 0;
  std::size_t y = 0;

  bool operator==(const Window&) const = default;
};

// Top-left corners of every in-bounds square window of `side` whose
// foreground share is >= 50%, in row-major order.
std::vector<Window> valid_windows(const ForegroundMask& mask, std::size_t side);

struct AugmentLog {
  std::size_t crop_x = 0;
  std::size_t crop_y = 0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int quarter_turns = 0;  // counter-clockwise, 0..3

  bool operator==(const AugmentLog&) const = default;
};

struct PatchImage {
  Image pixels;
  Window source;
  std::vector<AugmentLog> augmentations;
};

// M distinct valid windows drawn uniformly with `seed`. Throws
// InsufficientForegroundError when fewer than M windows qualify.
std::vector<PatchImage> sample_patches(const Image& image, const ForegroundMask& mask, std::size_t count,
                                       std::size_t side, std::uint64_t seed);

Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t width, std::size_t height);
Image flip_horizontal(const Image& image);
Image flip_vertical(const Image& image);
// Rotates counter-clockwise by k * 90 degrees (k taken mod 4).
Image rotate_quarter_turns(const Image& image, int k);

// Applies crop -> horizontal flip -> vertical flip -> rotation as recorded in
// `plan`, appending the plan to the patch's log.
PatchImage apply_augmentation(const PatchImage& patch, const AugmentLog& plan);

// Seeded random 224x224 crop, independent 50% flips, and k*90 degree rotation
// with k uniform in {0,1,2,3}. Throws SizeError for inputs under 224.
PatchImage augment(const PatchImage& patch, std::uint64_t seed);

}  // namespace patchbag
