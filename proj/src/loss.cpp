// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/loss.hpp"

#include <cmath>

#include "neos/error.hpp"

namespace neos {

namespace {

void check_truth_shape(const Tensor& seg_logits, const MaskIndexed& truth, const char* op) {
  if (seg_logits.rank() != 4 || truth.n != seg_logits.dim(0) ||
      truth.height != seg_logits.dim(2) || truth.width != seg_logits.dim(3)) {
    fail(ErrorKind::kDimension, std::string(op) + ": logits " + shape_string(seg_logits.shape()) +
                                    " do not match truth [" + std::to_string(truth.n) + "," +
                                    std::to_string(truth.height) + "," +
                                    std::to_string(truth.width) + "]");
  }
}

Tensor zero_scalar() { return Tensor::scalar(0.0); }

}  // namespace

SoftMask soft_mask(const Tensor& seg_logits) { return {softmax_channelwise(seg_logits)}; }

Tensor cross_entropy_pixelwise(const Tensor& seg_logits, const MaskIndexed& truth,
                               std::optional<std::uint8_t> ignore_index) {
  check_truth_shape(seg_logits, truth, "cross_entropy_pixelwise");
  const Index n = seg_logits.dim(0), k = seg_logits.dim(1), sp = truth.height * truth.width;
  // Flat index of the true-class entry of every contributing pixel.
  std::vector<Index> picks;
  picks.reserve(truth.values.size());
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < sp; ++p) {
      const std::uint8_t t = truth.values[static_cast<std::size_t>(s * sp + p)];
      if (ignore_index && t == *ignore_index) continue;
      if (t >= k) {
        fail(ErrorKind::kLabel, "cross_entropy_pixelwise: label " + std::to_string(t) +
                                    " outside [0," + std::to_string(k) + ")");
      }
      picks.push_back((s * k + t) * sp + p);
    }
  }
  if (picks.empty()) return zero_scalar();

  Tensor logp = log_softmax_channelwise(seg_logits);
  const Real count = static_cast<Real>(picks.size());
  Real acc = 0.0;
  for (Index i : picks) acc -= logp.data()[i];
  return Tensor::make_result("nll_pixelwise", Shape{1}, Array::Constant(1, acc / count), {logp},
                             [logp, picks = std::move(picks), count](const Array& g) {
                               Array* d = grad_buffer(logp);
                               if (!d) return;
                               const Real v = -g[0] / count;
                               for (Index i : picks) (*d)[i] += v;
                             });
}

Tensor dice_from_indicator(const Tensor& s, const Array& g, const Array& valid, Real smoothing) {
  if (g.size() != s.numel() || (valid.size() != 0 && valid.size() != s.numel())) {
    fail(ErrorKind::kDimension, "dice: indicator size does not match probabilities");
  }
  const Array w = valid.size() == 0 ? Array::Ones(s.numel()) : valid;
  const Real inter = (w * g * s.data()).sum();
  const Real sum_g = (w * g).sum();
  const Real sum_s = (w * s.data()).sum();
  const Real num = 2.0 * inter + smoothing;
  const Real den = sum_g + sum_s + smoothing;
  if (den == 0.0) fail(ErrorKind::kNumeric, "dice: empty masks with zero smoothing");
  const Real value = 1.0 - num / den;
  return Tensor::make_result("dice", Shape{1}, Array::Constant(1, value), {s},
                             [s, g, w, num, den](const Array& go) {
                               // d/ds_i [1 - num/den] = -(2 g_i den - num) / den^2
                               Array d = -(2.0 * g * den - num) / (den * den) * w;
                               accumulate_grad(s, go[0] * d);
                             });
}

Tensor dice_loss(const SoftMask& soft, const MaskIndexed& truth, Real smoothing) {
  const Tensor& s = soft.probabilities;
  check_truth_shape(s, truth, "dice_loss");
  const Index n = s.dim(0), k = s.dim(1), sp = truth.height * truth.width;
  Array g = Array::Zero(s.numel());
  Array valid = Array::Zero(s.numel());
  for (Index b = 0; b < n; ++b) {
    for (Index p = 0; p < sp; ++p) {
      const std::uint8_t t = truth.values[static_cast<std::size_t>(b * sp + p)];
      if (t == kIgnoreIndex) continue;
      if (t >= k) {
        fail(ErrorKind::kLabel, "dice_loss: label " + std::to_string(t) + " outside [0," +
                                    std::to_string(k) + ")");
      }
      for (Index c = 0; c < k; ++c) valid[(b * k + c) * sp + p] = 1.0;
      g[(b * k + t) * sp + p] = 1.0;
    }
  }
  return dice_from_indicator(s, g, valid, smoothing);
}

Tensor domain_misalignment_loss(const Tensor& domain_logits, std::span<const int> true_domains,
                                Real eps_clamp) {
  if (domain_logits.rank() != 2 || static_cast<Index>(true_domains.size()) != domain_logits.dim(0)) {
    fail(ErrorKind::kDimension, "domain_misalignment_loss: logits " +
                                    shape_string(domain_logits.shape()) + " vs " +
                                    std::to_string(true_domains.size()) + " labels");
  }
  if (!(eps_clamp > 0.0 && eps_clamp < 1.0)) {
    fail(ErrorKind::kConfig, "eps_clamp must lie in (0,1)");
  }
  const Index j = domain_logits.dim(0), m = domain_logits.dim(1);
  for (int z : true_domains) {
    if (z < 0 || z >= m) {
      fail(ErrorKind::kLabel, "domain label " + std::to_string(z) + " outside [0," +
                                  std::to_string(m) + ")");
    }
  }
  Tensor logp = log_softmax_channelwise(domain_logits);
  const Real floor = std::log(eps_clamp);
  std::vector<Index> active;
  Real acc = 0.0;
  for (Index s = 0; s < j; ++s) {
    const Index i = s * m + true_domains[static_cast<std::size_t>(s)];
    const Real v = logp.data()[i];
    if (v > floor) {
      acc += v;
      active.push_back(i);
    } else {
      acc += floor;
    }
  }
  const Real count = static_cast<Real>(j);
  return Tensor::make_result("domain_logprob", Shape{1}, Array::Constant(1, acc / count), {logp},
                             [logp, active = std::move(active), count](const Array& g) {
                               Array* d = grad_buffer(logp);
                               if (!d) return;
                               for (Index i : active) (*d)[i] += g[0] / count;
                             });
}

LossTerms total_loss(const ModelOutput& output, const std::optional<MaskIndexed>& truth,
                     std::span<const int> domains, const LossOptions& options) {
  if (!truth && domains.empty()) {
    fail(ErrorKind::kContract, "total_loss: batch carries neither masks nor domain tags");
  }
  if (options.lambda1 < 0.0 || options.lambda2 < 0.0) {
    fail(ErrorKind::kConfig, "loss weights must be non-negative");
  }
  LossTerms terms;
  bool labelled = false;
  if (truth) {
    labelled = std::any_of(truth->values.begin(), truth->values.end(),
                           [](std::uint8_t v) { return v != kIgnoreIndex; });
  }
  if (labelled) {
    terms.l0 = cross_entropy_pixelwise(output.seg_logits, *truth);
    terms.l1 = dice_loss(soft_mask(output.seg_logits), *truth, options.dice_smoothing);
  } else {
    terms.l0 = zero_scalar();
    terms.l1 = zero_scalar();
  }
  if (domains.empty()) {
    terms.l2 = zero_scalar();
  } else {
    terms.l2 = domain_misalignment_loss(output.domain_logits, domains, options.eps_clamp);
    if (options.mode == DomainLossMode::kAdversarialReversal) terms.l2 = -1.0 * terms.l2;
  }
  terms.total = terms.l0 + options.lambda1 * terms.l1 + options.lambda2 * terms.l2;

  LossBreakdown& b = terms.breakdown;
  b.l0 = terms.l0.item();
  b.l1 = terms.l1.item();
  b.l2 = terms.l2.item();
  b.lambda1 = options.lambda1;
  b.lambda2 = options.lambda2;
  b.total = terms.total.item();
  return terms;
}

}  // namespace neos
