// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "octaseg/core/config.hpp"
#include "octaseg/dataio/png_io.hpp"

namespace octaseg {

// On-disk layout, one directory per field of view:
//   root/<field>/images/<id>.png   8-bit grayscale input
//   root/<field>/rv/<id>.png       vessel mask (any value > 127 is foreground)
//   root/<field>/faz/<id>.png      avascular-zone mask, same convention
//   root/<field>/splits/{train,val,test}.txt   one id per line

template <typename T>
struct OCTASample {
  std::string id;
  Tensor<T> image;  // (1,1,H,W) in [0,1]
  Tensor<T> rv;     // (1,1,H,W) in {0,1}
  Tensor<T> faz;    // (1,1,H,W) in {0,1}
};

namespace dataio_detail {

template <typename T>
Tensor<T> read_mask(const std::string& path) {
  PngImage img = read_png(path);
  Tensor<T> t(Shape{1, 1, img.height, img.width});
  for (long i = 0; i < img.height * img.width; ++i) {
    long v = 0;
    for (long c = 0; c < img.channels; ++c)
      v += img.pixels[static_cast<size_t>(i * img.channels + c)];
    t[i] = (static_cast<double>(v) / img.channels) > 127.5 ? T(1) : T(0);
  }
  return t;
}

inline std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot read manifest " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    ids.push_back(line.substr(start));
  }
  return ids;
}

}  // namespace dataio_detail

/// True when the mask has any foreground inside the centered crop window.
template <typename T>
bool foreground_in_center(const Tensor<T>& mask, long roi) {
  long H = mask.dim(2), W = mask.dim(3);
  if (roi >= H && roi >= W) return true;
  long top = std::max(0L, (H - roi) / 2), left = std::max(0L, (W - roi) / 2);
  long bot = std::min(H, top + roi), right = std::min(W, left + roi);
  bool any = false, inside = false;
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < W; ++j)
      if (mask.at(0, 0, i, j) != T(0)) {
        any = true;
        if (i >= top && i < bot && j >= left && j < right) inside = true;
      }
  return !any || inside;
}

template <typename T>
std::vector<OCTASample<T>> load_dataset(const std::string& root, const std::string& field,
                                        const std::string& split, long roi_size = 224) {
  require(split == "train" || split == "val" || split == "test", ErrorCode::UnknownSplit,
          "split must be train, val, or test, got " + split);
  namespace fs = std::filesystem;
  fs::path base = fs::path(root) / field;
  std::vector<std::string> ids =
      dataio_detail::read_manifest((base / "splits" / (split + ".txt")).string());
  std::sort(ids.begin(), ids.end());
  std::vector<OCTASample<T>> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    OCTASample<T> s;
    s.id = id;
    s.image = read_gray<T>((base / "images" / (id + ".png")).string());
    fs::path rv_path = base / "rv" / (id + ".png");
    fs::path faz_path = base / "faz" / (id + ".png");
    require(fs::exists(rv_path), ErrorCode::MissingMask, "missing " + rv_path.string());
    require(fs::exists(faz_path), ErrorCode::MissingMask, "missing " + faz_path.string());
    s.rv = dataio_detail::read_mask<T>(rv_path.string());
    s.faz = dataio_detail::read_mask<T>(faz_path.string());
    require(s.rv.shape() == s.image.shape() && s.faz.shape() == s.image.shape(),
            ErrorCode::ShapeMismatch,
            "sample " + id + ": mask extent differs from image");
    if (!foreground_in_center(s.faz, roi_size))
      std::cerr << "warning: sample " << id
                << " has avascular-zone foreground only outside the centered crop\n";
    out.push_back(std::move(s));
  }
  return out;
}

/// Writes one sample into the standard layout (directories must exist).
template <typename T>
void save_sample(const std::string& root, const std::string& field,
                 const OCTASample<T>& s) {
  namespace fs = std::filesystem;
  fs::path base = fs::path(root) / field;
  write_gray((base / "images" / (s.id + ".png")).string(), s.image);
  write_gray((base / "rv" / (s.id + ".png")).string(), s.rv);
  write_gray((base / "faz" / (s.id + ".png")).string(), s.faz);
}

inline void ensure_layout(const std::string& root, const std::string& field) {
  namespace fs = std::filesystem;
  fs::path base = fs::path(root) / field;
  for (const char* d : {"images", "rv", "faz", "splits"}) fs::create_directories(base / d);
}

}  // namespace octaseg
