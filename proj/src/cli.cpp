// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neos/config.hpp"
#include "neos/data.hpp"
#include "neos/error.hpp"
#include "neos/metrics.hpp"
#include "neos/model.hpp"
#include "neos/trainer.hpp"

namespace fs = std::filesystem;

namespace neos {

namespace {

constexpr int kInternalErrorExit = 9;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::kIo, "cannot create directory " + dir.string());
}

/// Parses "32" or "32x48".
std::pair<Index, Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  auto num = [&](std::string_view s) {
    Index v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v <= 0) {
      fail(ErrorKind::kConfig, "invalid size '" + text + "'");
    }
    return v;
  };
  if (x == std::string::npos) {
    const Index v = num(text);
    return {v, v};
  }
  return {num(std::string_view(text).substr(0, x)), num(std::string_view(text).substr(x + 1))};
}

RgbImage center_crop(const RgbImage& image, Index height, Index width) {
  const Index y0 = (image.height - height) / 2, x0 = (image.width - width) / 2;
  RgbImage out(height, width);
  for (Index y = 0; y < height; ++y) {
    std::copy_n(image.px(y0 + y, x0), 3 * width, out.px(y, 0));
  }
  return out;
}

MaskIndexed center_crop(const MaskIndexed& mask, Index height, Index width) {
  const Index y0 = (mask.height - height) / 2, x0 = (mask.width - width) / 2;
  MaskIndexed out(1, height, width);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) out.at(0, y, x) = mask.at(0, y0 + y, x0 + x);
  }
  return out;
}

/// Fits a sample to the model input: equal sizes pass through, larger ones
/// are center-cropped with a warning, smaller ones are a dimension error.
Sample fit_to_input(const Sample& s, const ArchConfig& arch, std::ostream& err) {
  const Index h = s.image.shape()[1], w = s.image.shape()[2];
  if (h == arch.input_height && w == arch.input_width) return s;
  if (h < arch.input_height || w < arch.input_width) {
    fail(ErrorKind::kDimension, s.id + ": image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is smaller than the model input " +
                                    std::to_string(arch.input_height) + "x" +
                                    std::to_string(arch.input_width));
  }
  err << "warning: " << s.id << ": " << h << "x" << w << " center-cropped to "
      << arch.input_height << "x" << arch.input_width << "\n";
  Sample out = s;
  out.image = to_tensor(center_crop(to_rgb(s.image), arch.input_height, arch.input_width));
  if (s.mask) out.mask = center_crop(*s.mask, arch.input_height, arch.input_width);
  return out;
}

ColorLegend legend_for(const std::string& name, Index num_classes) {
  ColorLegend legend = legend_by_name(name);
  if (num_classes > legend.size()) {
    fail(ErrorKind::kConfig, "legend '" + name + "' has fewer colors than the model's classes");
  }
  legend.entries.resize(static_cast<std::size_t>(num_classes));
  return legend;
}

MaskIndexed predict_one(const ModelParams& params, const Sample& s) {
  return predict_masks(params, std::span<const Sample>(&s, 1)).front();
}

// --- synth --------------------------------------------------------------------

int cmd_synth(const Globals& g, Index n, const std::string& size, std::ostream& out) {
  const auto [h, w] = parse_size(size);
  if (g.out.empty()) fail(ErrorKind::kConfig, "synth needs --out");
  if (n < 1) fail(ErrorKind::kConfig, "synth: --n must be positive");
  const SynthCorpus corpus = synth_generate(g.seed.value_or(0), n, h, w);
  const ColorLegend legend = default_legend();
  const fs::path root(g.out);
  ensure_dir(root);
  write_dataset(root / "A", corpus.a, legend);
  write_dataset(root / "B", corpus.b, legend);
  write_dataset(root / "C", corpus.c, legend);
  write_truth_manifest(root / "hidden_truth" / "C", corpus.c, root / "C" / "images",
                       corpus.hidden_truth_c, legend);
  out << "wrote " << 3 * n << " images (" << 2 * n << " labelled, " << n
      << " unlabelled) and " << n << " hidden masks under " << root.string() << "\n";
  return 0;
}

// --- train --------------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& resume_path, std::ostream& out,
              std::ostream& err) {
  if (g.config.empty()) fail(ErrorKind::kConfig, "train needs --config");
  RunConfig rc = load_run_config(g.config);
  if (g.seed) rc.train.seed = *g.seed;
  if (!g.out.empty()) rc.out_dir = g.out;
  if (rc.manifests.empty()) fail(ErrorKind::kConfig, g.config + ": no manifests listed");

  const std::vector<DomainTag> tags = make_domain_tags(rc.domains);
  std::vector<Dataset> datasets;
  for (const fs::path& m : rc.manifests) datasets.push_back(load_dataset(m, tags));
  if (!rc.input_size_set) {
    for (const Dataset& d : datasets) {
      if (!d.samples.empty()) {
        rc.arch.input_height = d.samples.front().image.shape()[1];
        rc.arch.input_width = d.samples.front().image.shape()[2];
        break;
      }
    }
  }
  rc.arch.validate();
  for (Dataset& d : datasets) {
    for (Sample& s : d.samples) s = fit_to_input(s, rc.arch, err);
  }

  TrainOptions options;
  if (!resume_path.empty()) options.resume = load_checkpoint(resume_path);
  options.on_epoch = [&](const EpochLog& e) {
    err << "epoch " << e.epoch << ": total " << format_real(e.mean_total) << " (l0 "
        << format_real(e.mean_l0) << ", l1 " << format_real(e.mean_l1) << ", l2 "
        << format_real(e.mean_l2) << ")\n";
  };
  const TrainResult result = train_loop(datasets, rc.arch, rc.train, options);
  const Checkpoint& cp = result.checkpoint;

  ensure_dir(rc.out_dir);
  save_checkpoint(rc.out_dir / "checkpoint.bin", cp);
  write_step_log_csv(rc.out_dir / "train_log.csv", cp.log);
  write_epoch_log_csv(rc.out_dir / "epoch_metrics.csv", cp.log);

  std::vector<Sample> train_labelled;
  for (const Dataset& d : datasets) {
    if (!d.spec.labelled) continue;
    for (const Sample& s : d.samples) {
      if (!is_heldout(s.id, rc.train.seed, rc.train.holdout_fraction)) train_labelled.push_back(s);
    }
  }

  std::ofstream summary(rc.out_dir / "summary.txt");
  auto emit = [&](const std::string& line) {
    out << line << "\n";
    summary << line << "\n";
  };
  emit("epochs = " + std::to_string(cp.epoch));
  emit("steps = " + std::to_string(cp.optimizer.step));
  if (!cp.log.steps.empty()) {
    const LossBreakdown& b = cp.log.steps.back().loss;
    emit("final_l0 = " + format_real(b.l0));
    emit("final_l1 = " + format_real(b.l1));
    emit("final_l2 = " + format_real(b.l2));
    emit("final_total = " + format_real(b.total));
  }
  if (!train_labelled.empty()) {
    emit("train_cross_entropy = " + format_real(mean_cross_entropy(cp.params, train_labelled)));
    const MetricsReport r = compute_report(confusion_on(cp.params, train_labelled));
    emit("train_mean_iou = " + format_real(r.mean_iou));
  }
  if (result.final_heldout) {
    emit("heldout_accuracy = " + format_real(result.final_heldout->overall_accuracy));
    emit("heldout_mean_f1 = " + format_real(result.final_heldout->mean_f1));
    emit("heldout_mean_iou = " + format_real(result.final_heldout->mean_iou));
  }
  if (!cp.log.epochs.empty()) {
    emit("heldout_domain_accuracy = " + format_real(cp.log.epochs.back().domain_accuracy));
  }
  if (!summary) fail(ErrorKind::kIo, "cannot write " + (rc.out_dir / "summary.txt").string());
  return 0;
}

// --- segment ------------------------------------------------------------------

int cmd_segment(const Globals& g, const std::string& checkpoint, const std::string& legend_name,
                const std::vector<std::string>& images, std::ostream& out, std::ostream& err) {
  if (images.empty()) {
    err << "warning: no images given; nothing to do\n";
    return 0;
  }
  if (checkpoint.empty()) fail(ErrorKind::kConfig, "segment needs --checkpoint");
  if (g.out.empty()) fail(ErrorKind::kConfig, "segment needs --out");
  const Checkpoint cp = load_checkpoint(checkpoint);
  const ColorLegend legend = legend_for(legend_name, cp.params.arch.num_classes);
  const fs::path dir(g.out);
  ensure_dir(dir);

  std::optional<ErrorKind> first_error;
  for (const std::string& path : images) {
    try {
      Sample s;
      s.id = fs::path(path).stem().string();
      s.image = to_tensor(read_png_rgb(path));
      s = fit_to_input(s, cp.params.arch, err);
      const fs::path target = dir / (s.id + "_mask.png");
      write_png(target, index_to_color(predict_one(cp.params, s), legend));
      out << target.string() << "\n";
    } catch (const Error& e) {
      err << "error: " << path << ": " << e.what() << "\n";
      if (!first_error) first_error = e.kind();
    }
  }
  return first_error ? exit_code(*first_error) : 0;
}

// --- eval ---------------------------------------------------------------------

std::optional<Index> parse_class(const std::string& text, const ColorLegend& legend) {
  if (text.empty()) return std::nullopt;
  for (Index i = 0; i < legend.size(); ++i) {
    if (legend.entries[static_cast<std::size_t>(i)].name == text) return i;
  }
  Index v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || v < 0 || v >= legend.size()) {
    fail(ErrorKind::kConfig, "unknown class '" + text + "'");
  }
  return v;
}

std::vector<DomainTag> any_tags(const fs::path& manifest) {
  // Tags only label samples here; accept whatever symbol the manifest carries.
  std::ifstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    trim(key);
    trim(value);
    if (key == "tag" && !value.empty()) {
      std::vector<DomainTag> tags = default_domain_tags();
      for (const DomainTag& t : tags) {
        if (t.symbol == value) return tags;
      }
      tags.push_back({value, static_cast<int>(tags.size())});
      return tags;
    }
  }
  return default_domain_tags();
}

int cmd_eval(const Globals& g, const std::string& checkpoint, bool identity,
             const std::string& manifest, const std::string& exclude, const std::string& legend_name,
             std::ostream& out, std::ostream& err) {
  if (manifest.empty()) fail(ErrorKind::kConfig, "eval needs --manifest");
  if (g.out.empty()) fail(ErrorKind::kConfig, "eval needs --out");
  if (identity == !checkpoint.empty()) {
    fail(ErrorKind::kConfig, "eval needs exactly one of --checkpoint and --identity");
  }
  const Dataset data = load_dataset(manifest, any_tags(manifest));
  if (!data.spec.labelled) fail(ErrorKind::kContract, manifest + ": eval needs a labelled manifest");

  std::optional<Checkpoint> cp;
  if (!identity) cp = load_checkpoint(checkpoint);
  const Index k = cp ? cp->params.arch.num_classes : legend_by_name(legend_name).size();
  const ColorLegend legend = legend_for(legend_name, k);
  const std::optional<Index> excluded = parse_class(exclude, legend);

  ConfusionMatrix cm(k);
  for (const Sample& raw : data.samples) {
    if (identity) {
      // The image is taken as its own prediction through the legend.
      confusion_accumulate(cm, color_to_index(to_rgb(raw.image), legend), *raw.mask);
    } else {
      const Sample s = fit_to_input(raw, cp->params.arch, err);
      confusion_accumulate(cm, predict_one(cp->params, s), *s.mask);
    }
  }
  const MetricsReport report = compute_report(cm, excluded);
  std::vector<std::string> names;
  for (const LegendEntry& e : legend.entries) names.push_back(e.name);

  const fs::path dir(g.out);
  ensure_dir(dir);
  write_report_text(dir / "metrics.txt", report);
  write_report_csv(dir / "metrics_per_class.csv", report, names);
  out << "samples = " << data.samples.size() << "\n"
      << "overall_accuracy = " << format_real(report.overall_accuracy) << "\n"
      << "mean_f1 = " << format_real(report.mean_f1) << "\n"
      << "mean_iou = " << format_real(report.mean_iou) << "\n"
      << "dice = " << format_real(report.dice) << "\n";
  if (excluded) out << "excluded_class = " << names[static_cast<std::size_t>(*excluded)] << "\n";
  return 0;
}

// --- spie ---------------------------------------------------------------------

struct SpieInputs {
  std::vector<RgbImage> inputs;
  std::vector<std::string> ids;
};

SpieReport spie_for(const Checkpoint* cp, const SpieInputs& data, const std::string& legend_name,
                    const SegmenterParams& seg) {
  std::vector<RgbImage> renders;
  if (!cp) {
    renders = data.inputs;
  } else {
    const ColorLegend legend = legend_for(legend_name, cp->params.arch.num_classes);
    for (const RgbImage& img : data.inputs) {
      Sample s;
      s.image = to_tensor(img);
      renders.push_back(index_to_color(predict_one(cp->params, s), legend));
    }
  }
  SpieReport r = spie(renders, data.inputs, seg);
  r.ids = data.ids;
  return r;
}

int cmd_spie(const Globals& g, const std::string& checkpoint, bool identity,
             const std::string& manifest, const std::string& baseline,
             std::optional<Real> baseline_spie, const SegmenterParams& seg,
             const std::string& legend_name, std::ostream& out, std::ostream& err) {
  if (manifest.empty()) fail(ErrorKind::kConfig, "spie needs --manifest");
  if (g.out.empty()) fail(ErrorKind::kConfig, "spie needs --out");
  if (identity == !checkpoint.empty()) {
    fail(ErrorKind::kConfig, "spie needs exactly one of --checkpoint and --identity");
  }
  if (!baseline.empty() && baseline_spie) {
    fail(ErrorKind::kConfig, "--baseline and --baseline-spie are mutually exclusive");
  }
  const Dataset data = load_dataset(manifest, any_tags(manifest));
  if (data.samples.empty()) fail(ErrorKind::kContract, manifest + ": manifest lists no images");

  std::optional<Checkpoint> cp;
  if (!identity) cp = load_checkpoint(checkpoint);
  SpieInputs inputs;
  for (const Sample& raw : data.samples) {
    const Sample s = cp ? fit_to_input(raw, cp->params.arch, err) : raw;
    inputs.inputs.push_back(to_rgb(s.image));
    inputs.ids.push_back(s.id);
  }
  const SpieReport ours = spie_for(cp ? &*cp : nullptr, inputs, legend_name, seg);

  const fs::path dir(g.out);
  ensure_dir(dir);
  write_spie_csv(dir / "spie.csv", ours);
  write_spie_text(dir / "spie.txt", ours);
  out << "samples = " << ours.num_samples << "\n"
      << "spie = " << format_real(ours.spie) << "\n";

  std::optional<Real> base = baseline_spie;
  if (!baseline.empty()) {
    const Checkpoint base_cp = load_checkpoint(baseline);
    if (!(base_cp.params.arch.input_height == (cp ? cp->params.arch.input_height
                                                   : inputs.inputs.front().height) &&
          base_cp.params.arch.input_width == (cp ? cp->params.arch.input_width
                                                  : inputs.inputs.front().width))) {
      fail(ErrorKind::kConfig, "baseline checkpoint expects a different input size");
    }
    const SpieReport base_report = spie_for(&base_cp, inputs, legend_name, seg);
    write_spie_csv(dir / "spie_baseline.csv", base_report);
    out << "baseline_spie = " << format_real(base_report.spie) << "\n";
    base = base_report.spie;
  } else if (base) {
    out << "baseline_spie = " << format_real(*base) << "\n";
  }
  if (base) {
    const Real gain = improvement(*base, ours.spie);
    out << "improvement = " << format_percent(gain, 0) << " (" << format_real(gain) << ")\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NEOS segmentation toolkit", "neos"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--out", g.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic A/B/C corpus");
  synth->fallthrough();
  Index n = 8;
  std::string size = "32";
  synth->add_option("--n", n, "Images per domain");
  synth->add_option("--size", size, "Image size, H or HxW");

  auto* train = app.add_subcommand("train", "Train a model from a run configuration");
  train->fallthrough();
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint");

  std::string checkpoint, legend = "isprs6", manifest, exclude, baseline;
  bool identity = false;

  auto* segment = app.add_subcommand("segment", "Write legend-colored masks for images");
  segment->fallthrough();
  std::vector<std::string> images;
  segment->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  segment->add_option("--legend", legend, "Color legend");
  segment->add_option("images", images, "PNG images");

  auto* eval = app.add_subcommand("eval", "Score predictions against a labelled manifest");
  eval->fallthrough();
  eval->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  eval->add_flag("--identity", identity, "Use each image as its own prediction");
  eval->add_option("--manifest", manifest, "Labelled dataset manifest");
  eval->add_option("--exclude-class", exclude, "Class name or index left out of the scores");
  eval->add_option("--legend", legend, "Color legend");

  auto* spie_cmd = app.add_subcommand("spie", "Label-free SPIE evaluation");
  spie_cmd->fallthrough();
  SegmenterParams seg;
  Real baseline_value = 0.0;
  spie_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  spie_cmd->add_flag("--identity", identity, "Use each image as its own mask rendering");
  spie_cmd->add_option("--manifest", manifest, "Image manifest");
  spie_cmd->add_option("--k", seg.k, "Segmenter merge threshold");
  spie_cmd->add_option("--min-size", seg.min_size, "Segmenter minimum region size");
  spie_cmd->add_option("--baseline", baseline, "Baseline checkpoint for the improvement figure");
  auto* baseline_value_opt =
      spie_cmd->add_option("--baseline-spie", baseline_value, "Known baseline SPIE value");
  spie_cmd->add_option("--legend", legend, "Color legend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*synth) return cmd_synth(g, n, size, out);
    if (*train) return cmd_train(g, resume, out, err);
    if (*segment) return cmd_segment(g, checkpoint, legend, images, out, err);
    if (*eval) return cmd_eval(g, checkpoint, identity, manifest, exclude, legend, out, err);
    if (*spie_cmd) {
      std::optional<Real> base;
      if (baseline_value_opt->count() > 0) base = baseline_value;
      return cmd_spie(g, checkpoint, identity, manifest, baseline, base, seg, legend, out, err);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternalErrorExit;
  }
  return 1;
}

}  // namespace neos
