// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "neos/model.hpp"
#include "neos/trainer.hpp"

namespace neos {

/// Contents of a `train` configuration file.
///
/// The file is plain `key = value` lines; `#` starts a comment. Every key is
/// validated and unknown keys are rejected by name. Relative manifest and
/// output paths resolve against the config file's directory.
struct RunConfig {
  ArchConfig arch;
  /// False until `input_size` is given; `train` then takes it from the data.
  bool input_size_set = false;
  TrainConfig train;
  std::vector<std::filesystem::path> manifests;
  /// Relative paths (including this default) resolve against the config file's directory.
  std::filesystem::path out_dir = "run";
  std::string legend = "isprs6";
  std::vector<std::string> domains = {"A", "B", "C"};
};

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes every key with its current value; parse_run_config reads it back.
std::string format_run_config(const RunConfig& config);

}  // namespace neos
