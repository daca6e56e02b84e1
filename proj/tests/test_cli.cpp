// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "neos/cli.hpp"
#include "neos/data.hpp"
#include "neos/error.hpp"
#include "neos/metrics.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace neos {
namespace {

using testing::read_bytes;
using testing::read_text;
using testing::TempDir;
using testing::write_text;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "neos");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// `key = value` lines of a summary into a map.
std::map<std::string, std::string> parse_pairs(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::size_t manifest_entries(const fs::path& manifest) {
  const std::string text = read_text(manifest);
  const auto files = text.find("files:\n");
  return static_cast<std::size_t>(
      std::count(text.begin() + static_cast<std::ptrdiff_t>(files + 7), text.end(), '\n'));
}

void write_tiny_config(const fs::path& path) {
  write_text(path,
             "# tiny run\nmanifests = data/A/manifest.txt, data/B/manifest.txt, data/C/manifest.txt\n"
             "epochs = 2\nbatch_size = 4\nholdout_fraction = 0\nseed = 5\n");
}

class CliTrained : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_trained");
    ASSERT_EQ(cli({"--seed", "3", "--out", (*dir_ / "data").string(), "synth", "--n", "4", "--size", "16"}).code, 0);
    write_tiny_config(*dir_ / "run.cfg");
    const CliRun r = cli({"--config", (*dir_ / "run.cfg").string(), "--out", (*dir_ / "run").string(), "train"});
    ASSERT_EQ(r.code, 0) << r.err;
    summary_ = new std::string(r.out);
  }
  static void TearDownTestSuite() {
    delete dir_;
    delete summary_;
  }
  static fs::path path(const std::string& name) { return *dir_ / name; }
  static std::string checkpoint() { return path("run/checkpoint.bin").string(); }

  static TempDir* dir_;
  static std::string* summary_;
};

TempDir* CliTrained::dir_ = nullptr;
std::string* CliTrained::summary_ = nullptr;

// --- usage --------------------------------------------------------------------

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"synth", "--n", "many"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

// --- synth --------------------------------------------------------------------

TEST(CliSynth, WritesThreeDomainsAndHiddenTruth) {
  TempDir dir("synth");
  const CliRun r = cli({"--seed", "7", "--out", dir.path().string(), "synth", "--n", "8", "--size", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* d : {"A", "B", "C"}) EXPECT_EQ(manifest_entries(dir / d / "manifest.txt"), 8u) << d;
  EXPECT_EQ(manifest_entries(dir / "hidden_truth/C/manifest.txt"), 8u);
  EXPECT_NE(read_text(dir / "C/manifest.txt").find("labelled = false"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "C/masks"));
  EXPECT_NE(r.out.find("24 images (16 labelled, 8 unlabelled)"), std::string::npos) << r.out;
}

TEST(CliSynth, RerunIsByteIdentical) {
  TempDir a("synth_a"), b("synth_b");
  ASSERT_EQ(cli({"--seed", "2", "--out", a.path().string(), "synth", "--n", "3", "--size", "16"}).code, 0);
  ASSERT_EQ(cli({"--seed", "2", "--out", b.path().string(), "synth", "--n", "3", "--size", "16"}).code, 0);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.path());
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);
}

TEST(CliSynth, SizeNotDivisibleByEightExitsWithConfigCode) {
  TempDir dir("synth_bad");
  const CliRun r = cli({"--out", dir.path().string(), "synth", "--size", "30"});
  EXPECT_EQ(r.code, exit_code(ErrorKind::kConfig));
  EXPECT_EQ(r.code, 2);
}

// --- train --------------------------------------------------------------------

TEST_F(CliTrained, WritesOutputsAndSummary) {
  for (const char* f : {"checkpoint.bin", "train_log.csv", "epoch_metrics.csv", "summary.txt"}) {
    EXPECT_TRUE(fs::exists(path("run") / f)) << f;
  }
  const auto kv = parse_pairs(*summary_);
  EXPECT_EQ(kv.at("epochs"), "2");
  for (const char* key : {"final_l0", "final_l1", "final_l2", "final_total", "train_cross_entropy",
                          "train_mean_iou", "heldout_domain_accuracy"}) {
    EXPECT_TRUE(kv.count(key)) << key;
  }
  EXPECT_EQ(read_text(path("run/summary.txt")), *summary_);
  const auto rows = read_csv(path("run/train_log.csv"));
  EXPECT_EQ(rows.front(), (std::vector<std::string>{"step", "epoch", "l0", "l1", "l2", "total"}));
  EXPECT_EQ(kv.at("steps"), std::to_string(rows.size() - 1));
}

TEST_F(CliTrained, SecondRunIsByteIdentical) {
  const CliRun r = cli({"--config", path("run.cfg").string(), "--out", path("again").string(), "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.bin", "train_log.csv", "epoch_metrics.csv", "summary.txt"}) {
    EXPECT_EQ(read_bytes(path("run") / f), read_bytes(path("again") / f)) << f;
  }
}

TEST_F(CliTrained, ResumeContinuesToConfiguredEpochs) {
  write_text(path("longer.cfg"),
             "manifests = data/A/manifest.txt, data/B/manifest.txt, data/C/manifest.txt\n"
             "epochs = 3\nbatch_size = 4\nholdout_fraction = 0\nseed = 5\n");
  const CliRun r = cli({"--config", path("longer.cfg").string(), "--out", path("resumed").string(),
                        "train", "--resume", checkpoint()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CliRun straight = cli({"--config", path("longer.cfg").string(), "--out",
                               path("straight").string(), "train"});
  ASSERT_EQ(straight.code, 0) << straight.err;
  EXPECT_EQ(read_bytes(path("resumed/checkpoint.bin")), read_bytes(path("straight/checkpoint.bin")));
}

TEST_F(CliTrained, ZeroLambda2KeepsColumnWithZeroContribution) {
  write_text(path("nol2.cfg"),
             "manifests = data/A/manifest.txt, data/B/manifest.txt, data/C/manifest.txt\n"
             "epochs = 1\nbatch_size = 4\nholdout_fraction = 0\nlambda2 = 0\n");
  const CliRun r = cli({"--config", path("nol2.cfg").string(), "--out", path("nol2").string(), "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(path("nol2/train_log.csv"));
  ASSERT_GT(rows.size(), 1u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const Real l0 = std::stod(rows[i][2]), l1 = std::stod(rows[i][3]), l2 = std::stod(rows[i][4]);
    EXPECT_TRUE(std::isfinite(l2));
    EXPECT_EQ(std::stod(rows[i][5]), l0 + 1.0 * l1 + 0.0 * l2);
  }
}

TEST_F(CliTrained, MissingManifestExitsWithIoCodeAndNamesPath) {
  write_text(path("missing.cfg"), "manifests = nowhere/manifest.txt\n");
  const CliRun r = cli({"--config", path("missing.cfg").string(), "--out", path("x").string(), "train"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("nowhere/manifest.txt"), std::string::npos) << r.err;
}

TEST_F(CliTrained, BadConfigExitsWithConfigCode) {
  write_text(path("typo.cfg"), "epoch = 3\n");
  const CliRun r = cli({"--config", path("typo.cfg").string(), "train"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'epoch'"), std::string::npos) << r.err;
}

TEST_F(CliTrained, CorruptCheckpointExitsWithCorruptionCode) {
  auto bytes = read_bytes(path("run/checkpoint.bin"));
  bytes.resize(bytes.size() / 2);
  const fs::path cut = path("cut.bin");
  write_text(cut, std::string(bytes.begin(), bytes.end()));
  const CliRun r = cli({"--out", path("seg_cut").string(), "segment", "--checkpoint", cut.string(),
                        path("data/A/images").string() + "/A_0000.png"});
  EXPECT_EQ(r.code, exit_code(ErrorKind::kCorruption));
}

// --- segment ------------------------------------------------------------------

TEST(CliSegment, EmptyListWarnsAndSucceeds) {
  const CliRun r = cli({"segment", "--checkpoint", "unused.bin"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST_F(CliTrained, SegmentIsDeterministicAndContinuesPastBadFiles) {
  std::vector<std::string> images;
  for (const auto& e : fs::directory_iterator(path("data/C/images"))) images.push_back(e.path().string());
  std::sort(images.begin(), images.end());
  std::vector<std::string> args = {"--out", path("seg1").string(), "segment", "--checkpoint", checkpoint()};
  args.insert(args.end(), images.begin(), images.end());
  ASSERT_EQ(cli(args).code, 0);
  args[1] = path("seg2").string();
  args.push_back(path("absent.png").string());
  const CliRun r = cli(args);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("absent.png"), std::string::npos);
  for (const std::string& img : images) {
    const std::string mask = fs::path(img).stem().string() + "_mask.png";
    EXPECT_EQ(read_bytes(path("seg1") / mask), read_bytes(path("seg2") / mask)) << mask;
    const RgbImage decoded = read_png_rgb(path("seg1") / mask);
    const MaskIndexed m = color_to_index(decoded, default_legend(), 0);
    for (std::uint8_t v : m.values) EXPECT_LT(v, 6);
  }
}

// --- eval ---------------------------------------------------------------------

/// A labelled manifest whose images are the legend rendering of `predicted`
/// and whose masks are `truth`.
fs::path write_identity_fixture(const fs::path& dir, const std::vector<MaskIndexed>& predicted,
                                const std::vector<MaskIndexed>& truth) {
  Dataset d;
  d.spec.tag = default_domain_tags()[0];
  d.spec.labelled = true;
  const ColorLegend legend = default_legend();
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    d.samples.push_back({to_tensor(index_to_color(predicted[i], legend)), truth[i], d.spec.tag,
                         "s" + std::to_string(i)});
  }
  write_dataset(dir, d, legend);
  return dir / "manifest.txt";
}

MaskIndexed mask_of(Index h, Index w, std::vector<std::uint8_t> values) {
  MaskIndexed m(1, h, w);
  m.values = std::move(values);
  return m;
}

TEST(CliEval, IdentityScoresOne) {
  TempDir dir("eval_id");
  std::vector<MaskIndexed> masks;
  for (int s = 0; s < 3; ++s) {
    MaskIndexed m(1, 8, 8);
    for (Index i = 0; i < m.size(); ++i) m.values[i] = static_cast<std::uint8_t>((i + s) % 6);
    masks.push_back(m);
  }
  const fs::path manifest = write_identity_fixture(dir / "data", masks, masks);
  const CliRun r = cli({"--out", (dir / "out").string(), "eval", "--identity", "--manifest", manifest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_pairs(r.out);
  for (const char* key : {"overall_accuracy", "mean_f1", "mean_iou", "dice"}) EXPECT_EQ(kv.at(key), "1") << key;
  EXPECT_EQ(read_csv(dir / "out/metrics_per_class.csv").size(), 7u);
}

TEST(CliEval, HandCountedFixtureAndExclusion) {
  TempDir dir("eval_2x2");
  // Confusion over classes 0 and 1 is [[1,1],[1,1]]; classes 2..5 never occur.
  const fs::path manifest = write_identity_fixture(
      dir / "data", {mask_of(2, 2, {0, 1, 0, 1})}, {mask_of(2, 2, {0, 0, 1, 1})});
  const CliRun r = cli({"--out", (dir / "out").string(), "eval", "--identity", "--manifest", manifest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_pairs(r.out);
  EXPECT_EQ(std::stod(kv.at("overall_accuracy")), 0.5);
  const auto rows = read_csv(dir / "out/metrics_per_class.csv");
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"class", "name", "f1", "iou"}));
  EXPECT_EQ(std::stod(rows[1][2]), 0.5);
  EXPECT_EQ(std::stod(rows[2][3]), 1.0 / 3.0);
  Real f = 0, j = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    f += std::stod(rows[i][2]);
    j += std::stod(rows[i][3]);
  }
  EXPECT_EQ(std::stod(kv.at("mean_f1")), f / 6.0);
  EXPECT_EQ(std::stod(kv.at("mean_iou")), j / 6.0);

  const std::string clutter = default_legend().entries[5].name;
  const CliRun ex = cli({"--out", (dir / "ex").string(), "eval", "--identity", "--manifest",
                         manifest.string(), "--exclude-class", clutter});
  ASSERT_EQ(ex.code, 0) << ex.err;
  const auto ex_rows = read_csv(dir / "ex/metrics_per_class.csv");
  EXPECT_EQ(ex_rows.size(), 6u);
  for (const auto& row : ex_rows) EXPECT_NE(row[1], clutter);
  EXPECT_NE(read_text(dir / "ex/metrics.txt").find("include_clutter = false"), std::string::npos);
  EXPECT_EQ(cli({"--out", (dir / "bad").string(), "eval", "--identity", "--manifest",
                 manifest.string(), "--exclude-class", "nonsense"}).code, 2);
}

TEST(CliEval, UnlabelledManifestIsContractError) {
  TempDir dir("eval_unl");
  ASSERT_EQ(cli({"--out", dir.path().string(), "synth", "--n", "1", "--size", "8"}).code, 0);
  const CliRun r = cli({"--out", (dir / "out").string(), "eval", "--identity", "--manifest",
                        (dir / "C/manifest.txt").string()});
  EXPECT_EQ(r.code, exit_code(ErrorKind::kContract));
}

TEST_F(CliTrained, EvalOnHiddenTruth) {
  const CliRun r = cli({"--out", path("eval").string(), "eval", "--checkpoint", checkpoint(),
                        "--manifest", path("data/hidden_truth/C/manifest.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_pairs(r.out);
  EXPECT_EQ(kv.at("samples"), "4");
  const Real iou = std::stod(kv.at("mean_iou"));
  EXPECT_GE(iou, 0.0);
  EXPECT_LE(iou, 1.0);
}

// --- spie ---------------------------------------------------------------------

TEST(CliSpie, IdentityIsZeroAndBaselineGivesFullImprovement) {
  TempDir dir("spie_id");
  ASSERT_EQ(cli({"--out", dir.path().string(), "synth", "--n", "2", "--size", "16"}).code, 0);
  const CliRun r = cli({"--out", (dir / "out").string(), "spie", "--identity", "--manifest",
                        (dir / "C/manifest.txt").string(), "--baseline-spie", "0.069"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_pairs(r.out);
  EXPECT_EQ(kv.at("spie"), "0");
  EXPECT_EQ(kv.at("improvement"), "100% (100)");
  EXPECT_EQ(read_csv(dir / "out/spie.csv").size(), 3u);
}

TEST_F(CliTrained, SpieIsMeanOfPerSampleRows) {
  const CliRun r = cli({"--out", path("spie").string(), "spie", "--checkpoint", checkpoint(),
                        "--manifest", path("data/C/manifest.txt").string(), "--baseline", checkpoint()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_pairs(r.out);
  const auto rows = read_csv(path("spie/spie.csv"));
  ASSERT_EQ(rows.size(), 5u);
  Real sum = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) sum += std::stod(rows[i][1]);
  EXPECT_EQ(std::stod(kv.at("spie")), sum / 4.0);
  EXPECT_EQ(kv.at("baseline_spie"), kv.at("spie"));
  ASSERT_GT(std::stod(kv.at("spie")), 0.0);
  EXPECT_EQ(kv.at("improvement"), "0% (0)");
}

TEST(CliSpie, NeedsExactlyOneSource) {
  EXPECT_EQ(cli({"--out", "x", "spie", "--manifest", "m.txt"}).code, 2);
  EXPECT_EQ(cli({"--out", "x", "spie", "--manifest", "m.txt", "--identity", "--checkpoint", "c"}).code, 2);
}

}  // namespace
}  // namespace neos
