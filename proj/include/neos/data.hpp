// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neos/image.hpp"
#include "neos/tensor.hpp"

namespace neos {

struct LegendEntry {
  std::string name;
  std::array<std::uint8_t, 3> rgb;
};

/// Ordered class legend; a class index is its position in the list.
struct ColorLegend {
  std::string name;
  std::vector<LegendEntry> entries;

  Index size() const { return static_cast<Index>(entries.size()); }
  /// Throws a configuration error if two colors are within 2*tolerance of
  /// each other on every channel (or are identical).
  void validate(int tolerance) const;
};

/// Six-class aerial legend: Buildings blue, Trees green, Cars yellow, Low
/// vegetation cyan, Roads white, Clutter red.
ColorLegend default_legend();
ColorLegend legend_by_name(const std::string& name);

struct DomainTag {
  std::string symbol;
  int index = 0;

  friend bool operator==(const DomainTag&, const DomainTag&) = default;
};

/// Builds tags from a list of unique symbols; the index is the position.
std::vector<DomainTag> make_domain_tags(std::span<const std::string> symbols);
std::vector<DomainTag> default_domain_tags();  // A, B, C
DomainTag find_tag(std::span<const DomainTag> tags, const std::string& symbol);

struct Sample {
  Tensor image;                     // [3,H,W] in [0,1]
  std::optional<MaskIndexed> mask;  // [1,H,W]; present iff labelled
  DomainTag domain;
  std::string id;
};

struct DatasetSpec {
  std::filesystem::path root;
  std::string legend = "isprs6";
  DomainTag tag;
  bool labelled = true;
  Index count = 0;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> samples;
};

inline constexpr int kDefaultColorTolerance = 8;

/// Maps each pixel to the legend entry within `tolerance` on every channel;
/// unmatched pixels become the ignore value.
MaskIndexed color_to_index(const RgbImage& image, const ColorLegend& legend,
                           int tolerance = kDefaultColorTolerance);
/// Renders a single-image mask with exact legend colors; ignore is black.
RgbImage index_to_color(const MaskIndexed& mask, const ColorLegend& legend);

// --- augmentation -----------------------------------------------------------

struct AugmentPolicy {
  bool hflip = true;
  bool vflip = true;
  bool rot90 = true;
  /// Downsample-then-upsample factors to choose from (2 and/or 4).
  std::vector<int> downsample_factors = {2, 4};

  static AugmentPolicy none() { return {false, false, false, {}}; }
  bool enabled() const { return hflip || vflip || rot90 || !downsample_factors.empty(); }
  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

Sample flip_horizontal(const Sample& sample);
Sample flip_vertical(const Sample& sample);
/// Quarter turn counter-clockwise; requires a square sample.
Sample rotate90(const Sample& sample);
/// Area-average (image) / nearest (mask) downsampling by `factor` followed by
/// nearest upsampling back to the input size.
Sample downsample_roundtrip(const Sample& sample, int factor);

/// Applies each enabled transform with a seeded coin flip (rotation picks 0-3
/// quarter turns, downsampling picks a factor). Image and mask always receive
/// the same geometry.
Sample augment(const Sample& sample, std::uint64_t seed, const AugmentPolicy& policy);

/// splitmix64-style combination used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// --- synthetic corpus -------------------------------------------------------

/// Labelled A, labelled B (+0.2 brightness, sigma 0.05 Gaussian noise),
/// unlabelled C (hue rotation and contrast reduction). C's masks live only in
/// `hidden_truth_c` and never in a Sample.
struct SynthCorpus {
  Dataset a;
  Dataset b;
  Dataset c;
  std::vector<MaskIndexed> hidden_truth_c;
};

inline constexpr Real kSynthBrightnessShift = 0.2;
inline constexpr Real kSynthNoiseSigma = 0.05;
inline constexpr Real kSynthHueDegrees = 40.0;
inline constexpr Real kSynthContrast = 0.8;

SynthCorpus synth_generate(std::uint64_t seed, Index n_per_domain, Index height, Index width,
                           Index num_classes = 6);

// --- batching ---------------------------------------------------------------

struct Batch {
  std::vector<Sample> samples;  // labelled samples first
  Index labelled_count = 0;
};

Tensor batch_images(const Batch& batch);
/// [N,H,W] truth with unlabelled samples filled with the ignore value;
/// nullopt when the batch holds no labelled sample.
std::optional<MaskIndexed> batch_truth(const Batch& batch);
std::vector<int> batch_domains(const Batch& batch);

/// Reproducible mixed-batch stream. Each batch holds
/// round(batch_size * labelled_fraction) labelled samples drawn from the pooled
/// labelled datasets and fills the rest from the unlabelled ones. An epoch is
/// one pass over the labelled pool in a seeded permutation. The stream refers
/// to the samples of `datasets`, which must outlive it.
class BatchStream {
 public:
  BatchStream(std::span<const Dataset> datasets, Index batch_size, Real labelled_fraction,
              std::uint64_t seed);

  std::vector<Batch> epoch(int index) const;
  Index labelled_per_batch() const { return labelled_per_batch_; }

 private:
  std::vector<const Sample*> labelled_;
  std::vector<const Sample*> unlabelled_;
  Index batch_size_;
  Index labelled_per_batch_;
  std::uint64_t seed_;
};

std::vector<Batch> make_batches(std::span<const Dataset> datasets, Index batch_size,
                                Real labelled_fraction, std::uint64_t seed, int epoch = 0);

// --- manifests --------------------------------------------------------------

/// Writes images (and masks, legend-colored) under `dir` plus `manifest.txt`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                   const ColorLegend& legend);

/// Writes a labelled manifest pointing at existing image files and freshly
/// written masks; used for hidden evaluation truth.
void write_truth_manifest(const std::filesystem::path& dir, const Dataset& images_dataset,
                          const std::filesystem::path& images_dir,
                          std::span<const MaskIndexed> masks, const ColorLegend& legend);

/// Loads a manifest. Masks are auto-detected: single-channel PNGs hold class
/// indices, RGB PNGs are decoded through the legend.
Dataset load_dataset(const std::filesystem::path& manifest, std::span<const DomainTag> tags,
                     int tolerance = kDefaultColorTolerance);

}  // namespace neos
