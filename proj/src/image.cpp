// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "neos/error.hpp"

namespace neos {

MaskIndexed MaskIndexed::sample(Index s) const {
  MaskIndexed out(1, height, width);
  const auto plane = static_cast<std::size_t>(height * width);
  std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(s * height * width), plane,
              out.values.begin());
  return out;
}

MaskIndexed stack_masks(const std::vector<MaskIndexed>& masks) {
  if (masks.empty()) return {};
  MaskIndexed out(0, masks[0].height, masks[0].width);
  for (const MaskIndexed& m : masks) {
    if (m.height != out.height || m.width != out.width) {
      fail(ErrorKind::kDimension, "stack_masks: masks differ in size");
    }
    out.values.insert(out.values.end(), m.values.begin(), m.values.end());
    out.n += m.n;
  }
  return out;
}

Tensor to_tensor(const RgbImage& image) {
  const Index plane = image.height * image.width;
  Array data(3 * plane);
  for (Index p = 0; p < plane; ++p) {
    for (Index c = 0; c < 3; ++c) {
      data[c * plane + p] = image.pixels[static_cast<std::size_t>(3 * p + c)] / 255.0;
    }
  }
  return Tensor(Shape{3, image.height, image.width}, std::move(data));
}

RgbImage to_rgb(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) {
    fail(ErrorKind::kDimension, "to_rgb expects [3,H,W], got " + shape_string(chw.shape()));
  }
  RgbImage out(chw.dim(1), chw.dim(2));
  const Index plane = out.height * out.width;
  for (Index p = 0; p < plane; ++p) {
    for (Index c = 0; c < 3; ++c) {
      const Real v = std::clamp(chw.data()[c * plane + p], 0.0, 1.0);
      out.pixels[static_cast<std::size_t>(3 * p + c)] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string());
  return f;
}

void write_png_raw(const std::filesystem::path& path, Index height, Index width,
                   int color_type, int channels, const std::uint8_t* pixels) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIo, "failed to write " + path.string());
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + y * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

PngRaster read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte header[8] = {};
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    fail(ErrorKind::kIo, "not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kIo, "libpng initialisation failed");
  }
  PngRaster raster;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kIo, "failed to decode " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  raster.width = png_get_image_width(png, info);
  raster.height = png_get_image_height(png, info);
  raster.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raster.pixels.resize(stride * static_cast<std::size_t>(raster.height));
  rows.resize(static_cast<std::size_t>(raster.height));
  for (Index y = 0; y < raster.height; ++y) {
    rows[static_cast<std::size_t>(y)] = raster.pixels.data() + static_cast<std::size_t>(y) * stride;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raster;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  PngRaster raster = read_png(path);
  RgbImage out(raster.height, raster.width);
  if (raster.channels == 3) {
    out.pixels = std::move(raster.pixels);
  } else if (raster.channels == 1) {
    for (std::size_t i = 0; i < raster.pixels.size(); ++i) {
      std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i), 3, raster.pixels[i]);
    }
  } else {
    fail(ErrorKind::kIo, "unsupported channel count in " + path.string());
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_raw(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 3, image.pixels.data());
}

void write_png_gray(const std::filesystem::path& path, const MaskIndexed& mask) {
  write_png_raw(path, mask.height, mask.width, PNG_COLOR_TYPE_GRAY, 1, mask.values.data());
}

}  // namespace neos
