// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "neos/data.hpp"
#include "neos/error.hpp"
#include "neos/metrics.hpp"

namespace fs = std::filesystem;

namespace neos {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& source, int line, const std::string& key,
                            const std::string& value, const std::string& expected) {
  fail(ErrorKind::kConfig, source + ":" + std::to_string(line) + ": invalid value '" + value +
                               "' for '" + key + "' (expected " + expected + ")");
}

Real parse_real(const std::string& v, const std::string& source, int line, const std::string& key) {
  Real out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(source, line, key, v, "a number");
  return out;
}

long long parse_int(const std::string& v, const std::string& source, int line, const std::string& key) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(source, line, key, v, "an integer");
  return out;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir,
                           const std::string& source) {
  RunConfig cfg;
  cfg.out_dir = base_dir / cfg.out_dir;
  TrainConfig& t = cfg.train;
  bool num_classes_set = false;
  using Setter = std::function<void(const std::string&, int, const std::string&)>;
  auto real_key = [&](Real& field) -> Setter {
    return [&field, &source](const std::string& v, int line, const std::string& key) {
      field = parse_real(v, source, line, key);
    };
  };
  std::map<std::string, Setter> keys = {
      {"lambda1", real_key(t.lambda1)},
      {"lambda2", real_key(t.lambda2)},
      {"learning_rate", real_key(t.learning_rate)},
      {"adam_beta1", real_key(t.adam_beta1)},
      {"adam_beta2", real_key(t.adam_beta2)},
      {"adam_eps", real_key(t.adam_eps)},
      {"labelled_fraction", real_key(t.labelled_fraction)},
      {"eps_clamp", real_key(t.eps_clamp)},
      {"dice_smoothing", real_key(t.dice_smoothing)},
      {"holdout_fraction", real_key(t.holdout_fraction)},
      {"optimizer",
       [&](const std::string& v, int line, const std::string& key) {
         if (v == "sgd") t.optimizer = OptimizerKind::kSgd;
         else if (v == "adam") t.optimizer = OptimizerKind::kAdam;
         else bad_value(source, line, key, v, "sgd or adam");
       }},
      {"domain_loss_mode",
       [&](const std::string& v, int line, const std::string& key) {
         if (v == "literal") t.domain_loss_mode = DomainLossMode::kLiteral;
         else if (v == "adversarial_reversal") t.domain_loss_mode = DomainLossMode::kAdversarialReversal;
         else bad_value(source, line, key, v, "literal or adversarial_reversal");
       }},
      {"batch_size",
       [&](const std::string& v, int line, const std::string& key) {
         t.batch_size = parse_int(v, source, line, key);
       }},
      {"epochs",
       [&](const std::string& v, int line, const std::string& key) {
         t.epochs = static_cast<int>(parse_int(v, source, line, key));
       }},
      {"seed",
       [&](const std::string& v, int line, const std::string& key) {
         const long long s = parse_int(v, source, line, key);
         if (s < 0) bad_value(source, line, key, v, "a non-negative integer");
         t.seed = static_cast<std::uint64_t>(s);
       }},
      {"augment",
       [&](const std::string& v, int line, const std::string& key) {
         t.augment = AugmentPolicy::none();
         if (v == "none") return;
         for (const std::string& item : split_list(v)) {
           if (item == "hflip") t.augment.hflip = true;
           else if (item == "vflip") t.augment.vflip = true;
           else if (item == "rot90") t.augment.rot90 = true;
           else if (item == "down2") t.augment.downsample_factors.push_back(2);
           else if (item == "down4") t.augment.downsample_factors.push_back(4);
           else bad_value(source, line, key, v, "none or a list of hflip,vflip,rot90,down2,down4");
         }
       }},
      {"num_classes",
       [&](const std::string& v, int line, const std::string& key) {
         cfg.arch.num_classes = parse_int(v, source, line, key);
         num_classes_set = true;
       }},
      {"stage_widths",
       [&](const std::string& v, int line, const std::string& key) {
         const auto items = split_list(v);
         if (items.size() != 4) bad_value(source, line, key, v, "four comma-separated widths");
         for (std::size_t i = 0; i < 4; ++i) cfg.arch.stage_widths[i] = parse_int(items[i], source, line, key);
       }},
      {"decoder_width",
       [&](const std::string& v, int line, const std::string& key) {
         cfg.arch.decoder_width = parse_int(v, source, line, key);
       }},
      {"input_size",
       [&](const std::string& v, int line, const std::string& key) {
         const auto parts = split_list(v, 'x');
         if (parts.size() != 1 && parts.size() != 2) bad_value(source, line, key, v, "H or HxW");
         cfg.arch.input_height = parse_int(parts[0], source, line, key);
         cfg.arch.input_width = parse_int(parts.back(), source, line, key);
         cfg.input_size_set = true;
       }},
      {"legend", [&](const std::string& v, int, const std::string&) { cfg.legend = v; }},
      {"domains",
       [&](const std::string& v, int line, const std::string& key) {
         cfg.domains = split_list(v);
         if (cfg.domains.size() < 2) bad_value(source, line, key, v, "at least two domain symbols");
       }},
      {"manifests",
       [&](const std::string& v, int, const std::string&) {
         cfg.manifests.clear();
         for (const std::string& item : split_list(v)) {
           const fs::path p(item);
           cfg.manifests.push_back(p.is_absolute() ? p : base_dir / p);
         }
       }},
      {"out_dir",
       [&](const std::string& v, int, const std::string&) {
         const fs::path p(v);
         cfg.out_dir = p.is_absolute() ? p : base_dir / p;
       }},
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfig, source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end()) {
      fail(ErrorKind::kConfig, source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (seen.count(key)) {
      fail(ErrorKind::kConfig, source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    seen[key] = line_no;
    it->second(value, line_no, key);
  }

  const ColorLegend legend = legend_by_name(cfg.legend);
  if (!num_classes_set) cfg.arch.num_classes = legend.size();
  if (cfg.arch.num_classes > legend.size()) {
    fail(ErrorKind::kConfig, source + ": num_classes exceeds the size of legend '" + cfg.legend + "'");
  }
  make_domain_tags(cfg.domains);
  cfg.arch.num_domains = static_cast<Index>(cfg.domains.size());
  t.validate();
  if (cfg.input_size_set) cfg.arch.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path(), path.string());
}

std::string format_run_config(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream os;
  auto join = [](const auto& items) {
    std::string s;
    for (const auto& item : items) {
      if (!s.empty()) s += ",";
      if constexpr (std::is_same_v<std::decay_t<decltype(item)>, fs::path>) {
        s += item.string();
      } else if constexpr (std::is_arithmetic_v<std::decay_t<decltype(item)>>) {
        s += std::to_string(item);
      } else {
        s += item;
      }
    }
    return s;
  };
  os << "lambda1 = " << format_real(t.lambda1) << "\n";
  os << "lambda2 = " << format_real(t.lambda2) << "\n";
  os << "learning_rate = " << format_real(t.learning_rate) << "\n";
  os << "optimizer = " << (t.optimizer == OptimizerKind::kAdam ? "adam" : "sgd") << "\n";
  os << "adam_beta1 = " << format_real(t.adam_beta1) << "\n";
  os << "adam_beta2 = " << format_real(t.adam_beta2) << "\n";
  os << "adam_eps = " << format_real(t.adam_eps) << "\n";
  os << "batch_size = " << t.batch_size << "\n";
  os << "labelled_fraction = " << format_real(t.labelled_fraction) << "\n";
  os << "epochs = " << t.epochs << "\n";
  os << "seed = " << t.seed << "\n";
  os << "domain_loss_mode = "
     << (t.domain_loss_mode == DomainLossMode::kLiteral ? "literal" : "adversarial_reversal") << "\n";
  os << "eps_clamp = " << format_real(t.eps_clamp) << "\n";
  os << "dice_smoothing = " << format_real(t.dice_smoothing) << "\n";
  os << "holdout_fraction = " << format_real(t.holdout_fraction) << "\n";
  std::vector<std::string> aug;
  if (t.augment.hflip) aug.push_back("hflip");
  if (t.augment.vflip) aug.push_back("vflip");
  if (t.augment.rot90) aug.push_back("rot90");
  for (int f : t.augment.downsample_factors) aug.push_back("down" + std::to_string(f));
  os << "augment = " << (aug.empty() ? std::string("none") : join(aug)) << "\n";
  os << "num_classes = " << cfg.arch.num_classes << "\n";
  os << "stage_widths = " << join(cfg.arch.stage_widths) << "\n";
  os << "decoder_width = " << cfg.arch.decoder_width << "\n";
  if (cfg.input_size_set) {
    os << "input_size = " << cfg.arch.input_height << "x" << cfg.arch.input_width << "\n";
  }
  os << "legend = " << cfg.legend << "\n";
  os << "domains = " << join(cfg.domains) << "\n";
  if (!cfg.manifests.empty()) os << "manifests = " << join(cfg.manifests) << "\n";
  os << "out_dir = " << cfg.out_dir.string() << "\n";
  return os.str();
}

}  // namespace neos
