// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "neos/image.hpp"
#include "neos/tensor.hpp"

namespace neos {

/// Shape of the two-headed segmentation network.
struct ArchConfig {
  Index in_channels = 3;
  Index num_classes = 6;
  Index num_domains = 3;
  std::array<Index, 4> stage_widths = {8, 16, 32, 64};
  /// Channels of each 1x1 decoder projection before fusion.
  Index decoder_width = 16;
  Index input_height = 32;
  Index input_width = 32;

  /// Throws a configuration error when the architecture is unusable.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Named parameter tensors. Names are stable paths such as
/// "enc.stage2.conv.kernel"; iteration order is lexicographic.
struct ModelParams {
  ArchConfig arch;
  std::uint64_t seed = 0;
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  /// Deep copy; the copy shares no storage with this instance.
  ModelParams clone() const;
  void set_requires_grad(bool value);
  void zero_grad();
  Index parameter_count() const;
};

struct ModelOutput {
  Tensor seg_logits;     // [N,K,H,W]
  Tensor domain_logits;  // [N,M]
  Tensor latent;         // [N,C4], pooled stage-4 features
};

/// Kernels ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)) from a seeded mt19937_64;
/// biases zero.
ModelParams init_params(const ArchConfig& arch, std::uint64_t seed);

struct ForwardOptions {
  /// Inserts a gradient-reversal layer between the pooled features and the
  /// domain head.
  bool reverse_domain_gradient = false;
};

/// images: [N,3,H,W] with H,W equal to the configured input size.
///
/// Encoder: four 3x3 conv+ReLU stages with 2x2 average pooling after stages
/// 1-3. Decoder: 1x1 projection of every stage, nearest upsampling to full
/// resolution, channel concat, ReLU, 1x1 fusion conv to K logits. Domain head:
/// global average pool of stage 4 followed by an affine map to M logits.
ModelOutput forward(const ModelParams& params, const Tensor& images,
                    const ForwardOptions& options = {});

/// Per-pixel argmax over classes; ties go to the lowest class index.
MaskIndexed predict_mask(const ModelOutput& output);
MaskIndexed predict_mask(const Tensor& seg_logits);

}  // namespace neos
