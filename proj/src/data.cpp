// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "neos/error.hpp"

namespace fs = std::filesystem;

namespace neos {

// --- legend -----------------------------------------------------------------

void ColorLegend::validate(int tolerance) const {
  if (entries.empty()) fail(ErrorKind::kConfig, "legend '" + name + "' is empty");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      bool close = true;
      for (int c = 0; c < 3; ++c) {
        const int d = std::abs(int{entries[i].rgb[c]} - int{entries[j].rgb[c]});
        close = close && d <= 2 * tolerance;
      }
      if (close) {
        fail(ErrorKind::kConfig, "ambiguous legend: '" + entries[i].name + "' and '" +
                                     entries[j].name + "' lie within 2x tolerance " +
                                     std::to_string(tolerance));
      }
    }
  }
}

ColorLegend default_legend() {
  return {"isprs6",
          {{"Buildings", {0, 0, 255}},
           {"Trees", {0, 255, 0}},
           {"Cars", {255, 255, 0}},
           {"Low vegetation", {0, 255, 255}},
           {"Roads", {255, 255, 255}},
           {"Clutter", {255, 0, 0}}}};
}

ColorLegend legend_by_name(const std::string& name) {
  if (name == "isprs6") return default_legend();
  fail(ErrorKind::kConfig, "unknown legend '" + name + "'");
}

std::vector<DomainTag> make_domain_tags(std::span<const std::string> symbols) {
  std::vector<DomainTag> tags;
  for (const std::string& s : symbols) {
    if (s.empty()) fail(ErrorKind::kConfig, "empty domain symbol");
    for (const DomainTag& t : tags) {
      if (t.symbol == s) fail(ErrorKind::kConfig, "duplicate domain symbol '" + s + "'");
    }
    tags.push_back({s, static_cast<int>(tags.size())});
  }
  return tags;
}

std::vector<DomainTag> default_domain_tags() {
  const std::vector<std::string> symbols = {"A", "B", "C"};
  return make_domain_tags(symbols);
}

DomainTag find_tag(std::span<const DomainTag> tags, const std::string& symbol) {
  for (const DomainTag& t : tags) {
    if (t.symbol == symbol) return t;
  }
  fail(ErrorKind::kConfig, "unknown domain tag '" + symbol + "'");
}

MaskIndexed color_to_index(const RgbImage& image, const ColorLegend& legend, int tolerance) {
  legend.validate(tolerance);
  MaskIndexed mask(1, image.height, image.width, kIgnoreIndex);
  for (Index y = 0; y < image.height; ++y) {
    for (Index x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.px(y, x);
      for (std::size_t k = 0; k < legend.entries.size(); ++k) {
        const auto& rgb = legend.entries[k].rgb;
        if (std::abs(int{p[0]} - int{rgb[0]}) <= tolerance &&
            std::abs(int{p[1]} - int{rgb[1]}) <= tolerance &&
            std::abs(int{p[2]} - int{rgb[2]}) <= tolerance) {
          mask.at(0, y, x) = static_cast<std::uint8_t>(k);
          break;
        }
      }
    }
  }
  return mask;
}

RgbImage index_to_color(const MaskIndexed& mask, const ColorLegend& legend) {
  RgbImage image(mask.height, mask.width);
  for (Index y = 0; y < mask.height; ++y) {
    for (Index x = 0; x < mask.width; ++x) {
      const std::uint8_t v = mask.at(0, y, x);
      std::uint8_t* p = image.px(y, x);
      if (v == kIgnoreIndex) {
        p[0] = p[1] = p[2] = 0;
        continue;
      }
      if (v >= legend.size()) {
        fail(ErrorKind::kLabel, "class " + std::to_string(v) + " outside legend of size " +
                                    std::to_string(legend.size()));
      }
      std::copy(legend.entries[v].rgb.begin(), legend.entries[v].rgb.end(), p);
    }
  }
  return image;
}

// --- augmentation -------------------------------------------------------------

namespace {

// Applies a pixel permutation `src(y, x) -> (sy, sx)` to image and mask alike.
template <typename Map>
Sample remap(const Sample& sample, Index out_h, Index out_w, Map src) {
  const Index h = sample.image.dim(1), w = sample.image.dim(2);
  Array data(3 * out_h * out_w);
  for (Index c = 0; c < 3; ++c) {
    for (Index y = 0; y < out_h; ++y) {
      for (Index x = 0; x < out_w; ++x) {
        const auto [sy, sx] = src(y, x);
        data[(c * out_h + y) * out_w + x] = sample.image.data()[(c * h + sy) * w + sx];
      }
    }
  }
  Sample out{Tensor(Shape{3, out_h, out_w}, std::move(data)), std::nullopt, sample.domain,
             sample.id};
  if (sample.mask) {
    MaskIndexed m(1, out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
      for (Index x = 0; x < out_w; ++x) {
        const auto [sy, sx] = src(y, x);
        m.at(0, y, x) = sample.mask->at(0, sy, sx);
      }
    }
    out.mask = std::move(m);
  }
  return out;
}

}  // namespace

Sample flip_horizontal(const Sample& sample) {
  const Index h = sample.image.dim(1), w = sample.image.dim(2);
  return remap(sample, h, w, [w](Index y, Index x) { return std::pair{y, w - 1 - x}; });
}

Sample flip_vertical(const Sample& sample) {
  const Index h = sample.image.dim(1), w = sample.image.dim(2);
  return remap(sample, h, w, [h](Index y, Index x) { return std::pair{h - 1 - y, x}; });
}

Sample rotate90(const Sample& sample) {
  const Index h = sample.image.dim(1), w = sample.image.dim(2);
  if (h != w) fail(ErrorKind::kDimension, "rotate90 requires a square sample");
  return remap(sample, h, w, [w](Index y, Index x) { return std::pair{x, w - 1 - y}; });
}

Sample downsample_roundtrip(const Sample& sample, int factor) {
  const Index h = sample.image.dim(1), w = sample.image.dim(2);
  if (factor < 1 || h % factor != 0 || w % factor != 0) {
    fail(ErrorKind::kConfig, "downsample factor " + std::to_string(factor) +
                                 " does not divide sample size");
  }
  const Index f = factor;
  const Real area = static_cast<Real>(f * f);
  Array data(3 * h * w);
  for (Index c = 0; c < 3; ++c) {
    for (Index by = 0; by < h / f; ++by) {
      for (Index bx = 0; bx < w / f; ++bx) {
        Real acc = 0.0;
        for (Index dy = 0; dy < f; ++dy) {
          for (Index dx = 0; dx < f; ++dx) {
            acc += sample.image.data()[(c * h + by * f + dy) * w + bx * f + dx];
          }
        }
        for (Index dy = 0; dy < f; ++dy) {
          for (Index dx = 0; dx < f; ++dx) {
            data[(c * h + by * f + dy) * w + bx * f + dx] = acc / area;
          }
        }
      }
    }
  }
  Sample out{Tensor(Shape{3, h, w}, std::move(data)), std::nullopt, sample.domain, sample.id};
  if (sample.mask) {
    MaskIndexed m(1, h, w);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        m.at(0, y, x) = sample.mask->at(0, (y / f) * f + f / 2, (x / f) * f + f / 2);
      }
    }
    out.mask = std::move(m);
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentPolicy& policy) {
  std::mt19937_64 rng(seed);
  Sample out = sample;
  if (policy.hflip && (rng() & 1U)) out = flip_horizontal(out);
  if (policy.vflip && (rng() & 1U)) out = flip_vertical(out);
  if (policy.rot90) {
    const bool square = out.image.dim(1) == out.image.dim(2);
    unsigned turns = static_cast<unsigned>(rng() % 4);
    if (!square) turns &= 2U;
    if (turns == 2) {
      out = flip_vertical(flip_horizontal(out));
    } else {
      for (unsigned t = 0; t < turns; ++t) out = rotate90(out);
    }
  }
  if (!policy.downsample_factors.empty() && (rng() & 1U)) {
    const int f = policy.downsample_factors[rng() % policy.downsample_factors.size()];
    out = downsample_roundtrip(out, f);
  }
  return out;
}

// --- synthetic corpus ---------------------------------------------------------

namespace {

using Rgb = std::array<Real, 3>;

Rgb class_color(Index k) {
  static const std::array<Rgb, 6> base = {{{0.55, 0.35, 0.30},
                                           {0.15, 0.45, 0.15},
                                           {0.70, 0.65, 0.10},
                                           {0.35, 0.60, 0.30},
                                           {0.50, 0.50, 0.52},
                                           {0.60, 0.15, 0.15}}};
  if (k < 6) return base[static_cast<std::size_t>(k)];
  // Extra classes spread over a fixed hue wheel.
  const Real t = 0.37 * static_cast<Real>(k);
  return {0.4 + 0.25 * std::sin(t), 0.4 + 0.25 * std::sin(t + 2.1),
          0.4 + 0.25 * std::sin(t + 4.2)};
}

struct Scene {
  MaskIndexed mask;
  std::vector<Rgb> pixels;  // row-major
};

Scene draw_scene(std::mt19937_64& rng, Index h, Index w, Index num_classes) {
  auto uniform_int = [&](Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
  };
  std::uniform_real_distribution<Real> jitter(-0.04, 0.04);
  auto cls = [&](Index k) { return static_cast<std::uint8_t>(k % num_classes); };

  Scene scene{MaskIndexed(1, h, w), std::vector<Rgb>(static_cast<std::size_t>(h * w))};
  auto paint = [&](std::uint8_t k, auto inside) {
    Rgb color = class_color(k);
    for (Real& v : color) v += jitter(rng);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        if (!inside(y, x)) continue;
        scene.mask.at(0, y, x) = k;
        scene.pixels[static_cast<std::size_t>(y * w + x)] = color;
      }
    }
  };

  paint(cls(3), [](Index, Index) { return true; });  // low vegetation ground
  const Index stripes = uniform_int(1, 2);            // roads
  for (Index i = 0; i < stripes; ++i) {
    const bool horizontal = uniform_int(0, 1) == 1;
    const Index width = uniform_int(3, 5);
    const Index start = uniform_int(0, (horizontal ? h : w) - width);
    paint(cls(4), [=](Index y, Index x) {
      const Index v = horizontal ? y : x;
      return v >= start && v < start + width;
    });
  }
  const Index buildings = uniform_int(2, 4);
  for (Index i = 0; i < buildings; ++i) {
    const Index bh = uniform_int(h / 8, h / 3), bw = uniform_int(w / 8, w / 3);
    const Index y0 = uniform_int(0, h - bh), x0 = uniform_int(0, w - bw);
    paint(cls(0), [=](Index y, Index x) {
      return y >= y0 && y < y0 + bh && x >= x0 && x < x0 + bw;
    });
  }
  const Index trees = uniform_int(2, 3);
  for (Index i = 0; i < trees; ++i) {
    const Index r = uniform_int(2, std::max<Index>(2, h / 6));
    const Index cy = uniform_int(0, h - 1), cx = uniform_int(0, w - 1);
    paint(cls(1), [=](Index y, Index x) {
      return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
    });
  }
  const Index cars = uniform_int(1, 3);
  for (Index i = 0; i < cars; ++i) {
    const bool vertical = uniform_int(0, 1) == 1;
    const Index ch = vertical ? 4 : 2, cw = vertical ? 2 : 4;
    const Index y0 = uniform_int(0, h - ch), x0 = uniform_int(0, w - cw);
    paint(cls(2), [=](Index y, Index x) {
      return y >= y0 && y < y0 + ch && x >= x0 && x < x0 + cw;
    });
  }
  if (uniform_int(0, 1) == 1) {
    const Index s = uniform_int(2, 4);
    const Index y0 = uniform_int(0, h - s), x0 = uniform_int(0, w - s);
    paint(cls(5), [=](Index y, Index x) {
      return y >= y0 && y < y0 + s && x >= x0 && x < x0 + s;
    });
  }
  for (Index k = 6; k < num_classes; ++k) {
    const Index s = uniform_int(2, 5);
    const Index y0 = uniform_int(0, h - s), x0 = uniform_int(0, w - s);
    paint(cls(k), [=](Index y, Index x) {
      return y >= y0 && y < y0 + s && x >= x0 && x < x0 + s;
    });
  }
  return scene;
}

Real quantize(Real v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Tensor scene_tensor(const std::vector<Rgb>& pixels, Index h, Index w) {
  Array data(3 * h * w);
  for (Index p = 0; p < h * w; ++p) {
    for (Index c = 0; c < 3; ++c) data[c * h * w + p] = quantize(pixels[static_cast<std::size_t>(p)][c]);
  }
  return Tensor(Shape{3, h, w}, std::move(data));
}

// Rotation about the gray axis (Rodrigues), then contrast around mid-gray.
Rgb hue_contrast(const Rgb& in, Real degrees, Real contrast) {
  const Real a = degrees * 3.14159265358979323846 / 180.0;
  const Real c = std::cos(a), s = std::sin(a), k = (1.0 - c) / 3.0, r = std::sqrt(1.0 / 3.0) * s;
  const Real m00 = c + k, m01 = k - r, m02 = k + r;
  const Rgb rot = {m00 * in[0] + m01 * in[1] + m02 * in[2],
                   m02 * in[0] + m00 * in[1] + m01 * in[2],
                   m01 * in[0] + m02 * in[1] + m00 * in[2]};
  Rgb out;
  for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = 0.5 + contrast * (rot[static_cast<std::size_t>(i)] - 0.5);
  return out;
}

std::string sample_id(const std::string& symbol, Index i) {
  std::ostringstream os;
  os << symbol << '_';
  os.width(4);
  os.fill('0');
  os << i;
  return os.str();
}

}  // namespace

SynthCorpus synth_generate(std::uint64_t seed, Index n_per_domain, Index height, Index width,
                           Index num_classes) {
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    fail(ErrorKind::kConfig, "synthetic size " + std::to_string(height) + "x" +
                                 std::to_string(width) + " must be divisible by 8");
  }
  if (n_per_domain < 1) fail(ErrorKind::kConfig, "n_per_domain must be positive");
  if (num_classes < 2 || num_classes > 254) fail(ErrorKind::kConfig, "num_classes out of range");
  const auto tags = default_domain_tags();

  SynthCorpus corpus;
  auto make = [&](int domain, bool labelled) {
    Dataset d;
    d.spec.tag = tags[static_cast<std::size_t>(domain)];
    d.spec.labelled = labelled;
    d.spec.count = n_per_domain;
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(domain)));
    std::normal_distribution<Real> noise(0.0, kSynthNoiseSigma);
    for (Index i = 0; i < n_per_domain; ++i) {
      Scene scene = draw_scene(rng, height, width, num_classes);
      for (Rgb& px : scene.pixels) {
        if (domain == 1) {
          for (Real& v : px) v += kSynthBrightnessShift + noise(rng);
        } else if (domain == 2) {
          px = hue_contrast(px, kSynthHueDegrees, kSynthContrast);
        }
      }
      Sample s{scene_tensor(scene.pixels, height, width), std::nullopt, d.spec.tag,
               sample_id(d.spec.tag.symbol, i)};
      if (labelled) {
        s.mask = std::move(scene.mask);
      } else {
        corpus.hidden_truth_c.push_back(std::move(scene.mask));
      }
      d.samples.push_back(std::move(s));
    }
    return d;
  };
  corpus.a = make(0, true);
  corpus.b = make(1, true);
  corpus.c = make(2, false);
  return corpus;
}

// --- batching -------------------------------------------------------------------

Tensor batch_images(const Batch& batch) {
  if (batch.samples.empty()) fail(ErrorKind::kContract, "empty batch");
  const Shape& s0 = batch.samples[0].image.shape();
  const Index per = numel(s0);
  Array data(per * static_cast<Index>(batch.samples.size()));
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    if (batch.samples[i].image.shape() != s0) {
      fail(ErrorKind::kDimension, "batch images differ in shape");
    }
    data.segment(static_cast<Index>(i) * per, per) = batch.samples[i].image.data();
  }
  return Tensor(Shape{static_cast<Index>(batch.samples.size()), s0[0], s0[1], s0[2]},
                std::move(data));
}

std::optional<MaskIndexed> batch_truth(const Batch& batch) {
  if (batch.samples.empty()) return std::nullopt;
  const Index h = batch.samples[0].image.dim(1), w = batch.samples[0].image.dim(2);
  bool any = false;
  std::vector<MaskIndexed> masks;
  for (const Sample& s : batch.samples) {
    if (s.mask) {
      any = true;
      masks.push_back(*s.mask);
    } else {
      masks.emplace_back(1, h, w, kIgnoreIndex);
    }
  }
  if (!any) return std::nullopt;
  return stack_masks(masks);
}

std::vector<int> batch_domains(const Batch& batch) {
  std::vector<int> out;
  for (const Sample& s : batch.samples) out.push_back(s.domain.index);
  return out;
}

BatchStream::BatchStream(std::span<const Dataset> datasets, Index batch_size,
                         Real labelled_fraction, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be positive");
  if (!(labelled_fraction > 0.0 && labelled_fraction <= 1.0)) {
    fail(ErrorKind::kConfig, "labelled_fraction must lie in (0,1]");
  }
  for (const Dataset& d : datasets) {
    for (const Sample& s : d.samples) {
      if (d.spec.labelled) {
        if (!s.mask) fail(ErrorKind::kContract, "labelled sample " + s.id + " has no mask");
        labelled_.push_back(&s);
      } else {
        unlabelled_.push_back(&s);
      }
    }
  }
  labelled_per_batch_ =
      static_cast<Index>(std::llround(static_cast<Real>(batch_size) * labelled_fraction));
  const Index unlabelled_per_batch = batch_size - labelled_per_batch_;
  if (unlabelled_per_batch > 0 && unlabelled_.empty()) {
    fail(ErrorKind::kConfig, "batches need " + std::to_string(unlabelled_per_batch) +
                                 " unlabelled samples but no unlabelled dataset was given");
  }
  if (labelled_per_batch_ > 0 && labelled_.empty()) {
    fail(ErrorKind::kConfig, "batches need labelled samples but no labelled dataset was given");
  }
}

std::vector<Batch> BatchStream::epoch(int index) const {
  std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(index)));
  auto permuted = [&](const std::vector<const Sample*>& pool) {
    std::vector<const Sample*> p = pool;
    // Fisher-Yates with raw engine output keeps the order library-independent.
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
    return p;
  };
  const auto lab = permuted(labelled_);
  const auto unl = permuted(unlabelled_);
  const Index per_unl = batch_size_ - labelled_per_batch_;
  const Index n_lab = static_cast<Index>(lab.size()), n_unl = static_cast<Index>(unl.size());
  const Index count = labelled_per_batch_ > 0
                          ? (n_lab + labelled_per_batch_ - 1) / labelled_per_batch_
                          : (n_unl + batch_size_ - 1) / batch_size_;
  std::vector<Batch> batches;
  for (Index b = 0; b < count; ++b) {
    Batch batch;
    for (Index i = b * labelled_per_batch_; i < std::min(n_lab, (b + 1) * labelled_per_batch_); ++i) {
      batch.samples.push_back(*lab[static_cast<std::size_t>(i)]);
    }
    batch.labelled_count = static_cast<Index>(batch.samples.size());
    for (Index i = 0; i < per_unl; ++i) {
      batch.samples.push_back(*unl[static_cast<std::size_t>((b * per_unl + i) % n_unl)]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<Batch> make_batches(std::span<const Dataset> datasets, Index batch_size,
                                Real labelled_fraction, std::uint64_t seed, int epoch) {
  return BatchStream(datasets, batch_size, labelled_fraction, seed).epoch(epoch);
}

// --- manifests --------------------------------------------------------------------

namespace {

constexpr const char* kManifestName = "manifest.txt";

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_manifest_file(const fs::path& path, const DatasetSpec& spec,
                         const std::vector<std::pair<std::string, std::string>>& files) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "# neos dataset manifest\n";
  out << "tag = " << spec.tag.symbol << "\n";
  out << "labelled = " << (spec.labelled ? "true" : "false") << "\n";
  out << "legend = " << spec.legend << "\n";
  out << "count = " << files.size() << "\n";
  out << "files:\n";
  for (const auto& [image, mask] : files) {
    out << image;
    if (!mask.empty()) out << ' ' << mask;
    out << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& dataset, const ColorLegend& legend) {
  ensure_dir(dir / "images");
  if (dataset.spec.labelled) ensure_dir(dir / "masks");
  std::vector<std::pair<std::string, std::string>> files;
  for (const Sample& s : dataset.samples) {
    const std::string image = "images/" + s.id + ".png";
    write_png(dir / image, to_rgb(s.image));
    std::string mask;
    if (dataset.spec.labelled) {
      if (!s.mask) fail(ErrorKind::kContract, "labelled sample " + s.id + " has no mask");
      mask = "masks/" + s.id + ".png";
      write_png(dir / mask, index_to_color(*s.mask, legend));
    }
    files.emplace_back(image, mask);
  }
  write_manifest_file(dir / kManifestName, dataset.spec, files);
}

void write_truth_manifest(const fs::path& dir, const Dataset& images_dataset,
                          const fs::path& images_dir, std::span<const MaskIndexed> masks,
                          const ColorLegend& legend) {
  if (masks.size() != images_dataset.samples.size()) {
    fail(ErrorKind::kContract, "truth manifest: mask count does not match image count");
  }
  ensure_dir(dir / "masks");
  const fs::path rel_images =
      fs::absolute(images_dir).lexically_normal().lexically_relative(fs::absolute(dir).lexically_normal());
  std::vector<std::pair<std::string, std::string>> files;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Sample& s = images_dataset.samples[i];
    const std::string mask = "masks/" + s.id + ".png";
    write_png(dir / mask, index_to_color(masks[i], legend));
    files.emplace_back((rel_images / (s.id + ".png")).generic_string(), mask);
  }
  DatasetSpec spec = images_dataset.spec;
  spec.labelled = true;
  write_manifest_file(dir / kManifestName, spec, files);
}

Dataset load_dataset(const fs::path& manifest, std::span<const DomainTag> tags, int tolerance) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + manifest.string());
  Dataset d;
  d.spec.root = manifest.parent_path();
  std::string line;
  bool in_files = false, have_tag = false, have_labelled = false;
  int line_no = 0;
  std::vector<std::pair<std::string, std::string>> files;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (in_files) {
      std::istringstream ls(t);
      std::string image, mask, extra;
      ls >> image >> mask >> extra;
      if (!extra.empty()) {
        fail(ErrorKind::kFormat, manifest.string() + ":" + std::to_string(line_no) +
                                     ": expected 'image [mask]'");
      }
      files.emplace_back(image, mask);
      continue;
    }
    if (t == "files:") {
      in_files = true;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kFormat, manifest.string() + ":" + std::to_string(line_no) +
                                   ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key == "tag") {
      d.spec.tag = find_tag(tags, value);
      have_tag = true;
    } else if (key == "labelled") {
      if (value != "true" && value != "false") {
        fail(ErrorKind::kFormat, manifest.string() + ": labelled must be true or false");
      }
      d.spec.labelled = value == "true";
      have_labelled = true;
    } else if (key == "legend") {
      d.spec.legend = value;
    } else if (key == "count") {
      // Informational; the file list is authoritative.
    } else {
      fail(ErrorKind::kFormat, manifest.string() + ": unknown manifest key '" + key + "'");
    }
  }
  if (!have_tag || !have_labelled) {
    fail(ErrorKind::kFormat, manifest.string() + ": header needs 'tag' and 'labelled'");
  }
  const ColorLegend legend = legend_by_name(d.spec.legend);
  for (const auto& [image, mask] : files) {
    const fs::path image_path = d.spec.root / image;
    Sample s{to_tensor(read_png_rgb(image_path)), std::nullopt, d.spec.tag,
             fs::path(image).stem().string()};
    if (d.spec.labelled) {
      if (mask.empty()) {
        fail(ErrorKind::kFormat, manifest.string() + ": labelled entry " + image + " has no mask");
      }
      const fs::path mask_path = d.spec.root / mask;
      PngRaster raster = read_png(mask_path);
      MaskIndexed m;
      if (raster.channels == 1) {
        m = MaskIndexed(1, raster.height, raster.width);
        m.values = std::move(raster.pixels);
        for (std::uint8_t v : m.values) {
          if (v != kIgnoreIndex && v >= legend.size()) {
            fail(ErrorKind::kLabel, mask_path.string() + ": class " + std::to_string(v) +
                                        " outside legend");
          }
        }
      } else {
        m = color_to_index(read_png_rgb(mask_path), legend, tolerance);
      }
      if (m.height != s.image.dim(1) || m.width != s.image.dim(2)) {
        fail(ErrorKind::kDimension, mask_path.string() + ": mask size differs from image");
      }
      s.mask = std::move(m);
    }
    d.samples.push_back(std::move(s));
  }
  d.spec.count = static_cast<Index>(d.samples.size());
  return d;
}

}  // namespace neos
