// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/error.hpp"

namespace neos {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kLabel: return "label error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kEvaluation: return "evaluation error";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kIo: return 3;
    case ErrorKind::kLabel: return 4;
    case ErrorKind::kNumeric: return 5;
    case ErrorKind::kFormat:
    case ErrorKind::kCorruption: return 6;
    case ErrorKind::kContract:
    case ErrorKind::kEvaluation: return 7;
    case ErrorKind::kDimension: return 8;
  }
  return 9;
}

}  // namespace neos
