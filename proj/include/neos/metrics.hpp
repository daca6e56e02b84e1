// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neos/image.hpp"

namespace neos {

/// counts(t, p): pixels of true class t predicted as p. Ignore pixels are
/// never counted.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  explicit ConfusionMatrix(Index num_classes = 0)
      : counts(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes,
                                                                                 num_classes)) {}
  Index num_classes() const { return counts.rows(); }
  std::int64_t total() const { return counts.sum(); }
};

void confusion_accumulate(ConfusionMatrix& cm, const MaskIndexed& predicted,
                          const MaskIndexed& truth);

struct MetricsReport {
  Real overall_accuracy = 0.0;
  /// Class index of each per-class entry (excluded classes are absent).
  std::vector<Index> classes;
  std::vector<Real> per_class_f1;
  std::vector<Real> per_class_iou;
  Real mean_f1 = 0.0;
  Real mean_iou = 0.0;
  Real dice = 0.0;
  bool include_clutter = true;
  std::optional<Index> excluded_class;
};

/// Accuracy, per-class F1 = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN), unweighted
/// means over included classes, Dice score = mean F1. A class that never
/// occurs and is never predicted scores 1. `exclude_class` drops that row and
/// column before scoring.
MetricsReport compute_report(const ConfusionMatrix& cm,
                             std::optional<Index> exclude_class = std::nullopt);

// --- label-free segment metric -------------------------------------------------

struct SegmenterParams {
  Real k = 300.0;
  Index min_size = 20;
};

struct SegmentMap {
  Index height = 0;
  Index width = 0;
  std::vector<std::int32_t> labels;  // contiguous ids from 0, raster first-seen order
  std::vector<std::uint8_t> boundary;  // 1 where a 4-neighbour has another id
  Index num_segments = 0;
};

/// Graph-based greedy region merging over 4-neighbour edges weighted by RGB
/// Euclidean distance; components merge when the edge weight is at most
/// min(Int(Ci) + k/|Ci|, Int(Cj) + k/|Cj|). Components below min_size are then
/// merged across their cheapest edges.
SegmentMap segment_detect(const RgbImage& image, const SegmenterParams& params = {});

std::vector<std::uint8_t> boundary_from_labels(Index height, Index width,
                                               std::span<const std::int32_t> labels);

/// Fraction of pixels whose boundary flags differ.
Real boundary_disagreement(const SegmentMap& a, const SegmentMap& b);

struct SpieReport {
  Real spie = 0.0;
  Index num_samples = 0;
  std::vector<Real> per_sample;
  std::vector<std::string> ids;
};

/// Mean over samples of boundary_disagreement(g(mask_j), g(input_j)).
SpieReport spie(std::span<const RgbImage> model_masks, std::span<const RgbImage> inputs,
                const SegmenterParams& segmenter = {});

/// 100 (base - ours) / base.
Real improvement(Real base_spie, Real ours_spie);
/// Rounds a percentage to `decimals` places and formats it with a '%' sign.
std::string format_percent(Real percent, int decimals = 0);

// --- serialization ----------------------------------------------------------------

/// Shortest decimal form that parses back to the same double.
std::string format_real(Real v);

void write_report_text(const std::filesystem::path& path, const MetricsReport& report);
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report,
                      std::span<const std::string> class_names);
void write_spie_csv(const std::filesystem::path& path, const SpieReport& report);
void write_spie_text(const std::filesystem::path& path, const SpieReport& report);

/// Per-class rows parsed back from write_report_csv.
struct PerClassRow {
  Index class_index = 0;
  std::string name;
  Real f1 = 0.0;
  Real iou = 0.0;
};
std::vector<PerClassRow> read_report_csv(const std::filesystem::path& path);

}  // namespace neos
