// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace octaseg {

/// Machine-checkable failure categories surfaced by the library.
enum class ErrorCode {
  RoiTooLarge,
  BadChannels,
  ChannelTooSmall,
  OddChannels,
  ShapeMismatch,
  NonSquareInput,
  MissingMask,
  UnknownSplit,
  NonFiniteLoss,
  EmptySet,
  ConfigError,
  IoError,
  Internal,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::RoiTooLarge: return "RoiTooLarge";
    case ErrorCode::BadChannels: return "BadChannels";
    case ErrorCode::ChannelTooSmall: return "ChannelTooSmall";
    case ErrorCode::OddChannels: return "OddChannels";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonSquareInput: return "NonSquareInput";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::UnknownSplit: return "UnknownSplit";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace octaseg
