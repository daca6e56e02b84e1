// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <iosfwd>

namespace neos {

/// Runs the `neos` command line. Returns the process exit code: 0 on success,
/// 1 for usage errors, otherwise exit_code() of the error kind.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace neos
