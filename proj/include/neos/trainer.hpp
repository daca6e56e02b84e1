// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neos/data.hpp"
#include "neos/loss.hpp"
#include "neos/metrics.hpp"
#include "neos/model.hpp"

namespace neos {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  Real lambda1 = 1.0;
  Real lambda2 = 1.0;
  Real learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  Index batch_size = 8;
  Real labelled_fraction = 0.5;
  int epochs = 10;
  std::uint64_t seed = 0;
  DomainLossMode domain_loss_mode = DomainLossMode::kLiteral;
  Real eps_clamp = 1e-7;
  Real dice_smoothing = 1e-6;
  AugmentPolicy augment;
  /// Share of samples held out for per-epoch evaluation; 0 disables the split.
  Real holdout_fraction = 0.1;

  void validate() const;
  LossOptions loss_options() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamState {
  Array m;
  Array v;
  std::int64_t step = 0;
};

struct OptimizerState {
  std::int64_t step = 0;
  std::map<std::string, AdamState> adam;
};

/// param -= lr * grad
void sgd_update(Array& param, const Array& grad, Real lr);

/// One bias-corrected Adam step; increments state.step.
void adam_update(Array& param, const Array& grad, AdamState& state, Real lr, Real beta1,
                 Real beta2, Real eps);

struct StepLog {
  int epoch = 0;
  LossBreakdown loss;
};

struct EpochLog {
  int epoch = 0;
  Real mean_l0 = 0.0;
  Real mean_l1 = 0.0;
  Real mean_l2 = 0.0;
  Real mean_total = 0.0;
  /// Held-out scores; NaN when no labelled sample is held out.
  Real heldout_accuracy = 0.0;
  Real heldout_mean_f1 = 0.0;
  Real heldout_mean_iou = 0.0;
  /// Domain-head accuracy on every held-out sample; NaN when none.
  Real domain_accuracy = 0.0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  TrainConfig config;
  int epoch = 0;  // completed epochs
  TrainLog log;
};

/// Forward, total loss, backward and one optimizer update on `params` in
/// place. Gradients are cleared afterwards. Throws a numeric error naming the
/// first non-finite loss term.
LossBreakdown train_step(ModelParams& params, const Batch& batch, const TrainConfig& config,
                         OptimizerState& state);

struct TrainOptions {
  std::optional<Checkpoint> resume;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  /// Report of the final model on the held-out labelled split, if any.
  std::optional<MetricsReport> final_heldout;
};

/// Samples whose seeded id hash falls below `fraction`.
bool is_heldout(const std::string& id, std::uint64_t seed, Real fraction);

/// Trains from a fresh initialization (or `options.resume`) for
/// `config.epochs` epochs over the mixed-batch stream of `datasets`.
TrainResult train_loop(std::span<const Dataset> datasets, const ArchConfig& arch,
                       const TrainConfig& config, const TrainOptions& options = {});

// --- evaluation helpers -----------------------------------------------------

/// Predicted masks for `samples`, evaluated in chunks without recording a graph.
std::vector<MaskIndexed> predict_masks(const ModelParams& params, std::span<const Sample> samples);
ConfusionMatrix confusion_on(const ModelParams& params, std::span<const Sample> samples);
/// Mean pixel-wise cross-entropy over labelled `samples`.
Real mean_cross_entropy(const ModelParams& params, std::span<const Sample> samples);
/// Share of samples whose domain-head argmax equals their tag.
Real domain_accuracy(const ModelParams& params, std::span<const Sample> samples);

// --- checkpoints -------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_step_log_csv(const std::filesystem::path& path, const TrainLog& log);
void write_epoch_log_csv(const std::filesystem::path& path, const TrainLog& log);

}  // namespace neos
