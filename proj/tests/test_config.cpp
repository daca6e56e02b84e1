// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include <string>

#include <gtest/gtest.h>

#include "neos/config.hpp"
#include "neos/error.hpp"
#include "support.hpp"

namespace neos {
namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text, "/base", "cfg");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "parse succeeded for: " << text;
  return "";
}

TEST(Config, DefaultsFromEmptyText) {
  const RunConfig c = parse_run_config("# nothing\n\n", "/base");
  EXPECT_EQ(c.train, TrainConfig{});
  EXPECT_EQ(c.arch.num_classes, 6);
  EXPECT_EQ(c.arch.num_domains, 3);
  EXPECT_FALSE(c.input_size_set);
  EXPECT_EQ(c.out_dir, std::filesystem::path("/base/run"));
}

TEST(Config, ParsesEveryKey) {
  const RunConfig c = parse_run_config(
      "lambda1 = 0.5\nlambda2=0\nlearning_rate = 0.01  # trailing comment\noptimizer = sgd\n"
      "adam_beta1 = 0.8\nadam_beta2 = 0.99\nadam_eps = 1e-6\nbatch_size = 2\n"
      "labelled_fraction = 1\nepochs = 7\nseed = 42\ndomain_loss_mode = adversarial_reversal\n"
      "eps_clamp = 1e-5\ndice_smoothing = 0\nholdout_fraction = 0\naugment = hflip, rot90, down4\n"
      "num_classes = 5\nstage_widths = 4,8,8,16\ndecoder_width = 12\ninput_size = 32x16\n"
      "domains = X,Y\nmanifests = a/manifest.txt, /abs/m.txt\nout_dir = out\n",
      "/base");
  const TrainConfig& t = c.train;
  EXPECT_EQ(t.lambda1, 0.5);
  EXPECT_EQ(t.lambda2, 0.0);
  EXPECT_EQ(t.learning_rate, 0.01);
  EXPECT_EQ(t.optimizer, OptimizerKind::kSgd);
  EXPECT_EQ(t.adam_eps, 1e-6);
  EXPECT_EQ(t.batch_size, 2);
  EXPECT_EQ(t.epochs, 7);
  EXPECT_EQ(t.seed, 42u);
  EXPECT_EQ(t.domain_loss_mode, DomainLossMode::kAdversarialReversal);
  EXPECT_TRUE(t.augment.hflip && t.augment.rot90 && !t.augment.vflip);
  EXPECT_EQ(t.augment.downsample_factors, std::vector<int>{4});
  EXPECT_EQ(c.arch.num_classes, 5);
  EXPECT_EQ(c.arch.num_domains, 2);
  EXPECT_EQ(c.arch.stage_widths[3], 16);
  EXPECT_EQ(c.arch.input_height, 32);
  EXPECT_EQ(c.arch.input_width, 16);
  ASSERT_EQ(c.manifests.size(), 2u);
  EXPECT_EQ(c.manifests[0], std::filesystem::path("/base/a/manifest.txt"));
  EXPECT_EQ(c.manifests[1], std::filesystem::path("/abs/m.txt"));
  EXPECT_EQ(c.out_dir, std::filesystem::path("/base/out"));
}

TEST(Config, FormatRoundTrips) {
  const RunConfig c = parse_run_config(
      "learning_rate = 0.1\nlambda2 = 0.3\naugment = vflip,down2\ninput_size = 16\nseed = 9\n"
      "manifests = m.txt\n",
      "/base");
  const RunConfig back = parse_run_config(format_run_config(c), "/elsewhere");
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.arch, c.arch);
  EXPECT_EQ(back.manifests, c.manifests);
  EXPECT_EQ(back.out_dir, c.out_dir);
  EXPECT_EQ(format_run_config(back), format_run_config(c));
}

TEST(Config, ErrorsNameKeyAndLine) {
  EXPECT_NE(config_error("epochs = 3\nlamda2 = 1\n").find("cfg:2: unknown key 'lamda2'"), std::string::npos);
  EXPECT_NE(config_error("seed = 1\nseed = 2\n").find("duplicate key 'seed'"), std::string::npos);
  EXPECT_NE(config_error("learning_rate = fast\n").find("'learning_rate'"), std::string::npos);
  EXPECT_NE(config_error("just words\n").find("cfg:1"), std::string::npos);
}

TEST(Config, RejectsOutOfRangeValues) {
  for (const char* text :
       {"optimizer = rmsprop", "domain_loss_mode = other", "batch_size = 0", "epochs = 0",
        "lambda2 = -1", "labelled_fraction = 0", "labelled_fraction = 1.5", "holdout_fraction = 1",
        "eps_clamp = 0", "augment = shear", "stage_widths = 1,2,3", "input_size = 30",
        "domains = A", "domains = A,A", "num_classes = 9", "seed = -3", "legend = nope",
        "learning_rate = nan"}) {
    config_error(text);
  }
}

TEST(Config, MissingFileIsIoError) {
  try {
    load_run_config("/nonexistent/neos.cfg");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Config, LoadResolvesRelativeToFile) {
  testing::TempDir dir("cfg");
  testing::write_text(dir / "run.cfg", "manifests = data/A/manifest.txt\n");
  const RunConfig c = load_run_config(dir / "run.cfg");
  EXPECT_EQ(c.manifests.at(0), dir / "data/A/manifest.txt");
}

}  // namespace
}  // namespace neos
