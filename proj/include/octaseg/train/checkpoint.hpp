// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "octaseg/core/autodiff.hpp"
#include "octaseg/core/config.hpp"

namespace octaseg {

// Checkpoint container:
//   bytes 0..7    magic "OSEGCKPT"
//   bytes 8..11   format version, little-endian u32 (currently 1)
//   bytes 12..19  metadata length, little-endian u64
//   metadata      UTF-8 JSON: run info plus a "tensors" manifest of
//                 {name, shape} in registry order
//   payload       per manifest entry, numel little-endian float64 values

inline constexpr char kCheckpointMagic[8] = {'O', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string kind;  // best_rv | best_faz | best_avg | periodic
  long epoch = -1;
  double rv_dice = 0.0;
  double faz_dice = 0.0;
  std::string path;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"in_channels", c.in_channels},   {"base_channels", c.base_channels},
          {"ssm_state_dim", c.ssm_state_dim}, {"dropout_rate", c.dropout_rate},
          {"roi_size", c.roi_size},         {"hdfe", c.hdfe},
          {"vmaf", c.vmaf},                 {"cmbf", c.cmbf},
          {"cfeb", c.cfeb},                 {"roi", c.roi},
          {"rv_prior", c.rv_prior},         {"stop_rv_gradient", c.stop_rv_gradient},
          {"dsconv_mode", to_string(c.dsconv_mode)}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.in_channels = j.at("in_channels").get<long>();
  c.base_channels = j.at("base_channels").get<long>();
  c.ssm_state_dim = j.at("ssm_state_dim").get<long>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.roi_size = j.at("roi_size").get<long>();
  c.hdfe = j.at("hdfe").get<bool>();
  c.vmaf = j.at("vmaf").get<bool>();
  c.cmbf = j.at("cmbf").get<bool>();
  c.cfeb = j.at("cfeb").get<bool>();
  c.roi = j.at("roi").get<bool>();
  c.rv_prior = j.at("rv_prior").get<bool>();
  c.stop_rv_gradient = j.at("stop_rv_gradient").get<bool>();
  c.dsconv_mode =
      j.at("dsconv_mode").get<std::string>() == "offset" ? DsconvMode::Offset : DsconvMode::Plain;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace ckpt_detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

inline double get_f64(std::istream& in) {
  std::uint64_t bits = get_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::string& path, const ParamRegistry<T>& reg,
                     nlohmann::json meta) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : reg.entries()) {
    nlohmann::json shape = nlohmann::json::array();
    for (int d = 0; d < e.var.shape().rank(); ++d) shape.push_back(e.var.shape()[d]);
    manifest.push_back({{"name", e.name}, {"shape", shape}});
  }
  meta["tensors"] = std::move(manifest);
  std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 8);
  ckpt_detail::put_u32(out, kCheckpointVersion);
  ckpt_detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : reg.entries()) {
    const auto& val = e.var.value();
    for (long i = 0; i < val.numel(); ++i)
      ckpt_detail::put_f64(out, static_cast<double>(val[i]));
  }
  require(out.good(), ErrorCode::IoError, "short write on checkpoint " + path);
}

inline nlohmann::json read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, ErrorCode::IoError,
          "not a checkpoint file: " + path);
  std::uint32_t version = ckpt_detail::get_u32(in);
  require(version == kCheckpointVersion, ErrorCode::IoError,
          "unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = ckpt_detail::get_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorCode::IoError, "truncated checkpoint metadata: " + path);
  return nlohmann::json::parse(text);
}

/// Metadata only, no parameter payload.
inline nlohmann::json peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot read checkpoint " + path);
  return read_checkpoint_header(in, path);
}

/// Restores every tensor into an already-built registry; names and shapes
/// must match exactly. Returns the metadata.
template <typename T>
nlohmann::json load_checkpoint(const std::string& path, ParamRegistry<T>& reg) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot read checkpoint " + path);
  nlohmann::json meta = read_checkpoint_header(in, path);
  const auto& manifest = meta.at("tensors");
  require(manifest.size() == reg.size(), ErrorCode::IoError,
          "checkpoint holds " + std::to_string(manifest.size()) + " tensors, model has " +
              std::to_string(reg.size()));
  for (size_t k = 0; k < manifest.size(); ++k) {
    const auto& entry = manifest[k];
    std::string name = entry.at("name").get<std::string>();
    require(reg.entries()[k].name == name, ErrorCode::IoError,
            "checkpoint tensor order mismatch at " + name);
    auto& val = reg.entries()[k].var.node()->value;
    const auto& shape = entry.at("shape");
    require(static_cast<int>(shape.size()) == val.shape().rank(), ErrorCode::IoError,
            "rank mismatch for " + name);
    for (int d = 0; d < val.shape().rank(); ++d)
      require(shape[static_cast<size_t>(d)].get<long>() == val.shape()[d], ErrorCode::IoError,
              "shape mismatch for " + name);
    for (long i = 0; i < val.numel(); ++i)
      val[i] = static_cast<T>(ckpt_detail::get_f64(in));
  }
  require(in.good(), ErrorCode::IoError, "truncated checkpoint payload: " + path);
  return meta;
}

}  // namespace octaseg
