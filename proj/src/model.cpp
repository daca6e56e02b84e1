// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/model.hpp"

#include <cmath>
#include <random>

#include "neos/error.hpp"

namespace neos {

namespace {

std::string stage_name(int stage) { return "enc.stage" + std::to_string(stage + 1) + ".conv"; }
std::string proj_name(int stage) { return "dec.proj" + std::to_string(stage + 1); }

constexpr Index kPoolFactor = 2;

}  // namespace

void ArchConfig::validate() const {
  if (in_channels < 1) fail(ErrorKind::kConfig, "in_channels must be positive");
  if (num_classes < 2) fail(ErrorKind::kConfig, "num_classes must be at least 2");
  if (num_classes > 255) fail(ErrorKind::kConfig, "num_classes must be below 255");
  if (num_domains < 2) fail(ErrorKind::kConfig, "num_domains must be at least 2");
  for (Index w : stage_widths) {
    if (w < 1) fail(ErrorKind::kConfig, "stage widths must be positive");
  }
  if (decoder_width < 1) fail(ErrorKind::kConfig, "decoder_width must be positive");
  if (input_height < 8 || input_width < 8 || input_height % 8 != 0 || input_width % 8 != 0) {
    fail(ErrorKind::kConfig, "input size " + std::to_string(input_height) + "x" +
                                 std::to_string(input_width) + " must be divisible by 8");
  }
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::kContract, "unknown parameter " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::kContract, "unknown parameter " + name);
  return it->second;
}

ModelParams ModelParams::clone() const {
  ModelParams out{arch, seed, {}};
  for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.clone());
  return out;
}

void ModelParams::set_requires_grad(bool value) {
  for (auto& [name, t] : tensors) t.set_requires_grad(value);
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors) t.clear_grad();
}

Index ModelParams::parameter_count() const {
  Index count = 0;
  for (const auto& [name, t] : tensors) count += t.numel();
  return count;
}

ModelParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams params{arch, seed, {}};
  std::mt19937_64 rng(seed);

  // Creation order is fixed so the random stream is reproducible.
  auto add_kernel = [&](const std::string& name, Shape shape, Index fan_in) {
    const Real bound = std::sqrt(1.0 / static_cast<Real>(fan_in));
    std::uniform_real_distribution<Real> dist(-bound, bound);
    Array data(numel(shape));
    for (Index i = 0; i < data.size(); ++i) data[i] = dist(rng);
    params.tensors.emplace(name, Tensor(std::move(shape), std::move(data), true));
  };
  auto add_bias = [&](const std::string& name, Index size) {
    params.tensors.emplace(name, Tensor::zeros(Shape{size}, true));
  };

  Index in = arch.in_channels;
  for (int s = 0; s < 4; ++s) {
    const Index out = arch.stage_widths[static_cast<std::size_t>(s)];
    add_kernel(stage_name(s) + ".kernel", Shape{out, in, 3, 3}, in * 9);
    add_bias(stage_name(s) + ".bias", out);
    in = out;
  }
  for (int s = 0; s < 4; ++s) {
    const Index width = arch.stage_widths[static_cast<std::size_t>(s)];
    add_kernel(proj_name(s) + ".kernel", Shape{arch.decoder_width, width, 1, 1}, width);
    add_bias(proj_name(s) + ".bias", arch.decoder_width);
  }
  const Index fused = 4 * arch.decoder_width;
  add_kernel("dec.fuse.kernel", Shape{arch.num_classes, fused, 1, 1}, fused);
  add_bias("dec.fuse.bias", arch.num_classes);
  const Index latent = arch.stage_widths[3];
  add_kernel("dom.fc.weight", Shape{arch.num_domains, latent}, latent);
  add_bias("dom.fc.bias", arch.num_domains);
  return params;
}

ModelOutput forward(const ModelParams& params, const Tensor& images,
                    const ForwardOptions& options) {
  const ArchConfig& arch = params.arch;
  if (images.rank() != 4 || images.dim(1) != arch.in_channels ||
      images.dim(2) != arch.input_height || images.dim(3) != arch.input_width) {
    fail(ErrorKind::kDimension,
         "forward: images " + shape_string(images.shape()) + " do not match configured input [N," +
             std::to_string(arch.in_channels) + "," + std::to_string(arch.input_height) + "," +
             std::to_string(arch.input_width) + "]");
  }

  std::array<Tensor, 4> stages;
  Tensor x = images;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) x = avg_pool2d(x, kPoolFactor);
    x = relu(conv2d(x, params.at(stage_name(s) + ".kernel"), params.at(stage_name(s) + ".bias"),
                    1, 1));
    stages[static_cast<std::size_t>(s)] = x;
  }

  std::array<Tensor, 4> projected;
  Index factor = 1;
  for (int s = 0; s < 4; ++s) {
    Tensor p = conv2d(stages[static_cast<std::size_t>(s)], params.at(proj_name(s) + ".kernel"),
                      params.at(proj_name(s) + ".bias"));
    projected[static_cast<std::size_t>(s)] = factor == 1 ? p : upsample_nearest(p, factor);
    factor *= kPoolFactor;
  }
  Tensor fused = relu(concat_channels(projected));
  ModelOutput out;
  out.seg_logits = conv2d(fused, params.at("dec.fuse.kernel"), params.at("dec.fuse.bias"));

  out.latent = global_average_pool(stages[3]);
  Tensor head_in = options.reverse_domain_gradient ? gradient_reversal(out.latent) : out.latent;
  out.domain_logits = linear(head_in, params.at("dom.fc.weight"), params.at("dom.fc.bias"));
  return out;
}

MaskIndexed predict_mask(const Tensor& seg_logits) {
  if (seg_logits.rank() != 4) {
    fail(ErrorKind::kDimension, "predict_mask expects [N,K,H,W] logits");
  }
  const Index n = seg_logits.dim(0), k = seg_logits.dim(1), h = seg_logits.dim(2),
              w = seg_logits.dim(3), sp = h * w;
  MaskIndexed mask(n, h, w);
  const Array& x = seg_logits.data();
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < sp; ++p) {
      Index best = 0;
      Real best_value = x[s * k * sp + p];
      for (Index c = 1; c < k; ++c) {
        const Real v = x[(s * k + c) * sp + p];
        if (v > best_value) {
          best_value = v;
          best = c;
        }
      }
      mask.values[static_cast<std::size_t>(s * sp + p)] = static_cast<std::uint8_t>(best);
    }
  }
  return mask;
}

MaskIndexed predict_mask(const ModelOutput& output) { return predict_mask(output.seg_logits); }

}  // namespace neos
