// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "neos/error.hpp"

namespace neos {

void confusion_accumulate(ConfusionMatrix& cm, const MaskIndexed& predicted,
                          const MaskIndexed& truth) {
  if (predicted.n != truth.n || predicted.height != truth.height ||
      predicted.width != truth.width) {
    fail(ErrorKind::kDimension, "confusion_accumulate: predicted and truth masks differ in shape");
  }
  const Index k = cm.num_classes();
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const std::uint8_t t = truth.values[i], p = predicted.values[i];
    if (t == kIgnoreIndex || p == kIgnoreIndex) continue;
    if (t >= k || p >= k) {
      fail(ErrorKind::kLabel, "confusion_accumulate: class outside [0," + std::to_string(k) + ")");
    }
    ++cm.counts(t, p);
  }
}

MetricsReport compute_report(const ConfusionMatrix& cm, std::optional<Index> exclude_class) {
  const Index k = cm.num_classes();
  if (exclude_class && (*exclude_class < 0 || *exclude_class >= k)) {
    fail(ErrorKind::kEvaluation, "excluded class outside the confusion matrix");
  }
  MetricsReport r;
  r.excluded_class = exclude_class;
  r.include_clutter = !exclude_class.has_value();
  for (Index c = 0; c < k; ++c) {
    if (!exclude_class || c != *exclude_class) r.classes.push_back(c);
  }
  std::int64_t total = 0, correct = 0;
  for (Index t : r.classes) {
    correct += cm.counts(t, t);
    for (Index p : r.classes) total += cm.counts(t, p);
  }
  if (total == 0 || r.classes.empty()) {
    fail(ErrorKind::kEvaluation, "confusion matrix is empty after exclusion");
  }
  r.overall_accuracy = static_cast<Real>(correct) / static_cast<Real>(total);
  for (Index c : r.classes) {
    const std::int64_t tp = cm.counts(c, c);
    std::int64_t fp = 0, fn = 0;
    for (Index o : r.classes) {
      if (o == c) continue;
      fp += cm.counts(o, c);
      fn += cm.counts(c, o);
    }
    if (tp + fp + fn == 0) {
      r.per_class_f1.push_back(1.0);
      r.per_class_iou.push_back(1.0);
      continue;
    }
    r.per_class_f1.push_back(static_cast<Real>(2 * tp) / static_cast<Real>(2 * tp + fp + fn));
    r.per_class_iou.push_back(static_cast<Real>(tp) / static_cast<Real>(tp + fp + fn));
  }
  const Real n = static_cast<Real>(r.classes.size());
  r.mean_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) / n;
  r.mean_iou = std::accumulate(r.per_class_iou.begin(), r.per_class_iou.end(), 0.0) / n;
  r.dice = r.mean_f1;
  return r;
}

// --- segment detection ----------------------------------------------------------

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(Index n)
      : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1),
        internal_(static_cast<std::size_t>(n), 0.0) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }

  Index find(Index x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }

  /// Joins the roots `a` and `b`; the larger (then lower-indexed) root wins.
  Index join(Index a, Index b, Real weight) {
    if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)] ||
        (size_[static_cast<std::size_t>(a)] == size_[static_cast<std::size_t>(b)] && b < a)) {
      std::swap(a, b);
    }
    parent_[static_cast<std::size_t>(b)] = a;
    size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
    internal_[static_cast<std::size_t>(a)] = weight;
    return a;
  }

  Index size(Index root) const { return size_[static_cast<std::size_t>(root)]; }
  Real internal(Index root) const { return internal_[static_cast<std::size_t>(root)]; }

 private:
  std::vector<Index> parent_;
  std::vector<Index> size_;
  std::vector<Real> internal_;
};

struct Edge {
  Real weight;
  Index a, b;
};

}  // namespace

std::vector<std::uint8_t> boundary_from_labels(Index height, Index width,
                                               std::span<const std::int32_t> labels) {
  std::vector<std::uint8_t> boundary(static_cast<std::size_t>(height * width), 0);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const std::int32_t id = labels[static_cast<std::size_t>(y * width + x)];
      const bool edge =
          (x > 0 && labels[static_cast<std::size_t>(y * width + x - 1)] != id) ||
          (x + 1 < width && labels[static_cast<std::size_t>(y * width + x + 1)] != id) ||
          (y > 0 && labels[static_cast<std::size_t>((y - 1) * width + x)] != id) ||
          (y + 1 < height && labels[static_cast<std::size_t>((y + 1) * width + x)] != id);
      boundary[static_cast<std::size_t>(y * width + x)] = edge ? 1 : 0;
    }
  }
  return boundary;
}

SegmentMap segment_detect(const RgbImage& image, const SegmenterParams& params) {
  if (image.height < 1 || image.width < 1) {
    fail(ErrorKind::kContract, "segment_detect: empty image");
  }
  const Index h = image.height, w = image.width, n = h * w;
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * n));
  auto dist = [&](Index p, Index q) {
    const std::uint8_t* a = image.pixels.data() + 3 * p;
    const std::uint8_t* b = image.pixels.data() + 3 * q;
    Real acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      const Real d = static_cast<Real>(int{a[c]} - int{b[c]});
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index p = y * w + x;
      if (x + 1 < w) edges.push_back({dist(p, p + 1), p, p + 1});
      if (y + 1 < h) edges.push_back({dist(p, p + w), p, p + w});
    }
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& l, const Edge& r) { return l.weight < r.weight; });

  DisjointSets sets(n);
  auto threshold = [&](Index root) {
    return sets.internal(root) + params.k / static_cast<Real>(sets.size(root));
  };
  for (const Edge& e : edges) {
    const Index a = sets.find(e.a), b = sets.find(e.b);
    if (a == b) continue;
    if (e.weight <= std::min(threshold(a), threshold(b))) sets.join(a, b, e.weight);
  }
  for (const Edge& e : edges) {
    const Index a = sets.find(e.a), b = sets.find(e.b);
    if (a == b) continue;
    if (sets.size(a) < params.min_size || sets.size(b) < params.min_size) {
      sets.join(a, b, std::max(sets.internal(a), sets.internal(b)));
    }
  }

  SegmentMap map;
  map.height = h;
  map.width = w;
  map.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<std::int32_t> relabel(static_cast<std::size_t>(n), -1);
  std::int32_t next = 0;
  for (Index p = 0; p < n; ++p) {
    auto& id = relabel[static_cast<std::size_t>(sets.find(p))];
    if (id < 0) id = next++;
    map.labels[static_cast<std::size_t>(p)] = id;
  }
  map.num_segments = next;
  map.boundary = boundary_from_labels(h, w, map.labels);
  return map;
}

Real boundary_disagreement(const SegmentMap& a, const SegmentMap& b) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::kDimension, "boundary maps differ in size");
  }
  std::int64_t differ = 0;
  for (std::size_t i = 0; i < a.boundary.size(); ++i) differ += a.boundary[i] != b.boundary[i];
  return static_cast<Real>(differ) / static_cast<Real>(a.boundary.size());
}

SpieReport spie(std::span<const RgbImage> model_masks, std::span<const RgbImage> inputs,
                const SegmenterParams& segmenter) {
  if (model_masks.size() != inputs.size()) {
    fail(ErrorKind::kContract, "spie: " + std::to_string(model_masks.size()) + " masks vs " +
                                   std::to_string(inputs.size()) + " inputs");
  }
  if (inputs.empty()) fail(ErrorKind::kContract, "spie: no samples");
  SpieReport report;
  report.num_samples = static_cast<Index>(inputs.size());
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    report.per_sample.push_back(boundary_disagreement(segment_detect(model_masks[j], segmenter),
                                                      segment_detect(inputs[j], segmenter)));
    report.ids.push_back(std::to_string(j));
  }
  report.spie = std::accumulate(report.per_sample.begin(), report.per_sample.end(), 0.0) /
                static_cast<Real>(report.num_samples);
  return report;
}

Real improvement(Real base_spie, Real ours_spie) {
  if (!(base_spie > 0.0)) fail(ErrorKind::kContract, "improvement: base SPIE must be positive");
  return 100.0 * (base_spie - ours_spie) / base_spie;
}

std::string format_percent(Real percent, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  const Real scale = std::pow(10.0, decimals);
  os << std::round(percent * scale) / scale << '%';
  return os.str();
}

// --- serialization -------------------------------------------------------------------

std::string format_real(Real v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_report_text(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream out = open_out(path);
  out << "overall_accuracy = " << format_real(r.overall_accuracy) << "\n";
  out << "mean_f1 = " << format_real(r.mean_f1) << "\n";
  out << "mean_iou = " << format_real(r.mean_iou) << "\n";
  out << "dice = " << format_real(r.dice) << "\n";
  out << "include_clutter = " << (r.include_clutter ? "true" : "false") << "\n";
  if (r.excluded_class) out << "excluded_class = " << *r.excluded_class << "\n";
  out << "num_classes_scored = " << r.classes.size() << "\n";
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& r,
                      std::span<const std::string> class_names) {
  std::ofstream out = open_out(path);
  out << "class,name,f1,iou\n";
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    const auto c = static_cast<std::size_t>(r.classes[i]);
    const std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    out << c << ',' << name << ',' << format_real(r.per_class_f1[i]) << ','
        << format_real(r.per_class_iou[i]) << "\n";
  }
}

void write_spie_csv(const std::filesystem::path& path, const SpieReport& r) {
  std::ofstream out = open_out(path);
  out << "sample,residual\n";
  for (std::size_t i = 0; i < r.per_sample.size(); ++i) {
    out << (i < r.ids.size() ? r.ids[i] : std::to_string(i)) << ','
        << format_real(r.per_sample[i]) << "\n";
  }
}

void write_spie_text(const std::filesystem::path& path, const SpieReport& r) {
  std::ofstream out = open_out(path);
  out << "spie = " << format_real(r.spie) << "\n";
  out << "num_samples = " << r.num_samples << "\n";
}

std::vector<PerClassRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "class,name,f1,iou") fail(ErrorKind::kFormat, path.string() + ": bad CSV header");
  std::vector<PerClassRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) fail(ErrorKind::kFormat, path.string() + ": bad CSV row");
    PerClassRow row;
    row.class_index = std::stol(cells[0]);
    row.name = cells[1];
    std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), row.f1);
    std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), row.iou);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace neos
