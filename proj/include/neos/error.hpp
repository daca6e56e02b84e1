// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neos {

/// Error classes. Each maps to a distinct CLI exit code (see exit_code()).
enum class ErrorKind {
  kDimension,
  kConfig,
  kLabel,
  kContract,
  kFormat,
  kCorruption,
  kIo,
  kNumeric,
  kEvaluation,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for an error class. 0 is success, 1 is reserved for
/// command-line usage errors.
int exit_code(ErrorKind kind) noexcept;

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace neos
