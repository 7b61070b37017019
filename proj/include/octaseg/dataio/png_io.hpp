// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "octaseg/core/error.hpp"
#include "octaseg/core/tensor.hpp"

namespace octaseg {

// 8-bit PNG input/output. Images are exchanged with the rest of the system as
// (1,C,H,W) tensors scaled to [0,1]; everything on disk is 8-bit gray or RGB.

struct PngImage {
  long height = 0, width = 0, channels = 0;  // channels: 1 gray, 3 rgb
  std::vector<unsigned char> pixels;         // row-major, interleaved
};

namespace png_detail {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace png_detail

inline PngImage read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  require(f != nullptr, ErrorCode::IoError, "cannot open " + path);
  png_detail::FileCloser closer{f};
  unsigned char sig[8];
  require(std::fread(sig, 1, 8, f) == 8 && !png_sig_cmp(sig, 0, 8), ErrorCode::IoError,
          "not a png file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoError, "png allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::IoError, "png allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::IoError, "png decode failed: " + path);
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  int out_channels = png_get_channels(png, info);
  PngImage img;
  img.height = static_cast<long>(h);
  img.width = static_cast<long>(w);
  img.channels = out_channels;
  img.pixels.resize(static_cast<size_t>(h) * w * static_cast<size_t>(out_channels));
  std::vector<png_bytep> rows(h);
  size_t stride = static_cast<size_t>(w) * static_cast<size_t>(out_channels);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = img.pixels.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const PngImage& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::IoError,
          "write_png supports 1 or 3 channels");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, ErrorCode::IoError, "cannot write " + path);
  png_detail::FileCloser closer{f};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoError, "png allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::IoError, "png allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::IoError, "png encode failed: " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  size_t stride = static_cast<size_t>(img.width) * static_cast<size_t>(img.channels);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (long r = 0; r < img.height; ++r)
    rows[static_cast<size_t>(r)] = const_cast<png_bytep>(img.pixels.data()) +
                                   static_cast<size_t>(r) * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline unsigned char to_byte(double v) {
  double s = v * 255.0 + 0.5;
  if (s < 0) s = 0;
  if (s > 255) s = 255;
  return static_cast<unsigned char>(s);
}

/// Grayscale image as a (1,1,H,W) tensor in [0,1]. Color files are reduced by
/// the integer luma average.
template <typename T>
Tensor<T> read_gray(const std::string& path) {
  PngImage img = read_png(path);
  Tensor<T> t(Shape{1, 1, img.height, img.width});
  for (long i = 0; i < img.height * img.width; ++i) {
    long v = 0;
    for (long c = 0; c < img.channels; ++c)
      v += img.pixels[static_cast<size_t>(i * img.channels + c)];
    t[i] = static_cast<T>(static_cast<double>(v) / img.channels / 255.0);
  }
  return t;
}

template <typename T>
void write_gray(const std::string& path, const Tensor<T>& t) {
  require(t.dim(0) == 1 && t.dim(1) == 1, ErrorCode::IoError,
          "write_gray wants a (1,1,H,W) tensor");
  PngImage img;
  img.height = t.dim(2);
  img.width = t.dim(3);
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(t.numel()));
  for (long i = 0; i < t.numel(); ++i)
    img.pixels[static_cast<size_t>(i)] = to_byte(static_cast<double>(t[i]));
  write_png(path, img);
}

/// RGB writer from a (1,3,H,W) tensor in [0,1].
template <typename T>
void write_rgb(const std::string& path, const Tensor<T>& t) {
  require(t.dim(0) == 1 && t.dim(1) == 3, ErrorCode::IoError,
          "write_rgb wants a (1,3,H,W) tensor");
  long H = t.dim(2), W = t.dim(3);
  PngImage img;
  img.height = H;
  img.width = W;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(H * W * 3));
  for (long i = 0; i < H * W; ++i)
    for (long c = 0; c < 3; ++c)
      img.pixels[static_cast<size_t>(i * 3 + c)] =
          to_byte(static_cast<double>(t[c * H * W + i]));
  write_png(path, img);
}

}  // namespace octaseg
