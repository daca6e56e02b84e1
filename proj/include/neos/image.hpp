// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "neos/tensor.hpp"

namespace neos {

/// Reserved mask value excluded from every loss and metric.
inline constexpr std::uint8_t kIgnoreIndex = 255;

/// Class-index mask of shape [N,H,W] (N = 1 for a single image).
struct MaskIndexed {
  Index n = 1;
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> values;

  MaskIndexed() = default;
  MaskIndexed(Index n, Index height, Index width, std::uint8_t fill = 0)
      : n(n), height(height), width(width),
        values(static_cast<std::size_t>(n * height * width), fill) {}

  Index size() const { return static_cast<Index>(values.size()); }
  std::uint8_t& at(Index s, Index y, Index x) {
    return values[static_cast<std::size_t>((s * height + y) * width + x)];
  }
  std::uint8_t at(Index s, Index y, Index x) const {
    return values[static_cast<std::size_t>((s * height + y) * width + x)];
  }
  /// Sample `s` as a single-image mask.
  MaskIndexed sample(Index s) const;

  friend bool operator==(const MaskIndexed&, const MaskIndexed&) = default;
};

/// Stacks single-image masks of equal size into one [N,H,W] mask.
MaskIndexed stack_masks(const std::vector<MaskIndexed>& masks);

/// 8-bit interleaved RGB raster.
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(Index height, Index width)
      : height(height), width(width), pixels(static_cast<std::size_t>(3 * height * width), 0) {}

  std::uint8_t* px(Index y, Index x) {
    return pixels.data() + 3 * (y * width + x);
  }
  const std::uint8_t* px(Index y, Index x) const {
    return pixels.data() + 3 * (y * width + x);
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// [3,H,W] tensor in [0,1] from an 8-bit image (v / 255).
Tensor to_tensor(const RgbImage& image);
/// Inverse of to_tensor, rounding to the nearest 8-bit level with clamping.
RgbImage to_rgb(const Tensor& chw);

/// Raw PNG raster with its channel count (1 = gray/index, 3 = RGB).
struct PngRaster {
  Index height = 0;
  Index width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

PngRaster read_png(const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Writes a single-channel 8-bit PNG of mask sample 0.
void write_png_gray(const std::filesystem::path& path, const MaskIndexed& mask);

}  // namespace neos
