// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <optional>
#include <span>

#include "neos/image.hpp"
#include "neos/model.hpp"
#include "neos/tensor.hpp"

namespace neos {

enum class DomainLossMode {
  /// Mean log-probability of the true domain, minimized as written. Drives
  /// the domain head and the shared features toward domain confusion.
  kLiteral,
  /// Domain cross-entropy behind a gradient-reversal layer: the head learns
  /// to classify domains while the features receive the reversed gradient.
  kAdversarialReversal,
};

struct LossBreakdown {
  Real l0 = 0.0;  // pixel-wise cross-entropy
  Real l1 = 0.0;  // Dice loss
  Real l2 = 0.0;  // domain term as it enters the total
  Real lambda1 = 1.0;
  Real lambda2 = 1.0;
  Real total = 0.0;
};

/// Per-pixel class probabilities, softmax of the segmentation logits.
struct SoftMask {
  Tensor probabilities;  // [N,K,H,W]
};

SoftMask soft_mask(const Tensor& seg_logits);

/// Mean over non-ignored pixels of -log softmax(logits)[truth]. Returns a
/// zero scalar when no pixel contributes.
Tensor cross_entropy_pixelwise(const Tensor& seg_logits, const MaskIndexed& truth,
                               std::optional<std::uint8_t> ignore_index = kIgnoreIndex);

/// 1 - (2 sum(g s) + eps) / (sum(g) + sum(s) + eps) for probabilities `s` and a
/// same-sized binary indicator `g`. Entries with `valid` == 0 are skipped;
/// an empty `valid` means all entries count.
Tensor dice_from_indicator(const Tensor& s, const Array& g, const Array& valid,
                           Real smoothing);

/// Multi-class Dice loss: one-hot truth against every class channel of the
/// soft mask, all summed together. Ignore pixels are excluded from both sums.
Tensor dice_loss(const SoftMask& soft, const MaskIndexed& truth, Real smoothing = 1e-6);

/// (1/J) sum_j max(log softmax(logits_j)[z_j], ln eps_clamp).
Tensor domain_misalignment_loss(const Tensor& domain_logits, std::span<const int> true_domains,
                                Real eps_clamp = 1e-7);

struct LossOptions {
  Real lambda1 = 1.0;
  Real lambda2 = 1.0;
  Real dice_smoothing = 1e-6;
  Real eps_clamp = 1e-7;
  DomainLossMode mode = DomainLossMode::kLiteral;
};

struct LossTerms {
  Tensor l0, l1, l2, total;
  LossBreakdown breakdown;
};

/// total = l0 + lambda1 l1 + lambda2 l2.
///
/// `truth` is [N,H,W] over the whole batch; samples without ground truth are
/// filled with the ignore value so l0 and l1 only see labelled samples. When
/// nothing is labelled, l0 = l1 = 0. l2 covers every sample in
/// `domains`. In adversarial mode l2 is the domain cross-entropy (the negated
/// literal term), and `output` must come from a forward pass with gradient
/// reversal enabled.
LossTerms total_loss(const ModelOutput& output, const std::optional<MaskIndexed>& truth,
                     std::span<const int> domains, const LossOptions& options = {});

}  // namespace neos
