// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "neos/tensor.hpp"

namespace neos::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, Real lo = -1.0, Real hi = 1.0,
                            bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> dist(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (Index i = 0; i < t.numel(); ++i) t.mutable_data()[i] = dist(rng);
  return t;
}

/// Values at least `gap` away from zero, for checks across the relu kink.
inline Tensor random_away_from_zero(Shape shape, std::uint64_t seed, Real gap = 0.05) {
  Tensor t = random_tensor(std::move(shape), seed);
  for (Index i = 0; i < t.numel(); ++i) {
    Real& v = t.mutable_data()[i];
    v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("neos_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& path) {
  const std::vector<char> b = read_bytes(path);
  return {b.begin(), b.end()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace neos::testing
