// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "neos/error.hpp"

namespace neos {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::kConfig, "learning_rate must be a finite non-negative number");
  }
  if (epochs < 1) fail(ErrorKind::kConfig, "epochs must be at least 1");
  if (lambda1 < 0.0 || lambda2 < 0.0) fail(ErrorKind::kConfig, "lambda1 and lambda2 must be >= 0");
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be positive");
  if (!(labelled_fraction > 0.0 && labelled_fraction <= 1.0)) {
    fail(ErrorKind::kConfig, "labelled_fraction must lie in (0,1]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail(ErrorKind::kConfig, "adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) fail(ErrorKind::kConfig, "adam_eps must be positive");
  if (!(eps_clamp > 0.0 && eps_clamp < 1.0)) fail(ErrorKind::kConfig, "eps_clamp must lie in (0,1)");
  if (!(dice_smoothing >= 0.0)) fail(ErrorKind::kConfig, "dice_smoothing must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorKind::kConfig, "holdout_fraction must lie in [0,1)");
  }
  for (int f : augment.downsample_factors) {
    if (f != 2 && f != 4) fail(ErrorKind::kConfig, "downsample factors must be 2 or 4");
  }
}

LossOptions TrainConfig::loss_options() const {
  return {lambda1, lambda2, dice_smoothing, eps_clamp, domain_loss_mode};
}

void sgd_update(Array& param, const Array& grad, Real lr) {
  if (param.size() != grad.size()) fail(ErrorKind::kDimension, "sgd_update: shape mismatch");
  param -= lr * grad;
}

void adam_update(Array& param, const Array& grad, AdamState& state, Real lr, Real beta1,
                 Real beta2, Real eps) {
  if (param.size() != grad.size()) fail(ErrorKind::kDimension, "adam_update: shape mismatch");
  if (state.m.size() == 0) {
    state.m = Array::Zero(param.size());
    state.v = Array::Zero(param.size());
  }
  if (state.m.size() != param.size()) fail(ErrorKind::kDimension, "adam_update: state mismatch");
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.square();
  const Real c1 = 1.0 - std::pow(beta1, static_cast<Real>(state.step));
  const Real c2 = 1.0 - std::pow(beta2, static_cast<Real>(state.step));
  param -= lr * (state.m / c1) / ((state.v / c2).sqrt() + eps);
}

namespace {

void require_finite(Real value, const char* term) {
  if (!std::isfinite(value)) {
    fail(ErrorKind::kNumeric, std::string("non-finite loss term ") + term + " (" +
                                  std::to_string(value) + ")");
  }
}

}  // namespace

LossBreakdown train_step(ModelParams& params, const Batch& batch, const TrainConfig& config,
                         OptimizerState& state) {
  if (batch.samples.empty()) fail(ErrorKind::kContract, "train_step: empty batch");
  params.set_requires_grad(true);
  params.zero_grad();
  const Tensor images = batch_images(batch);
  const std::optional<MaskIndexed> truth = batch_truth(batch);
  const std::vector<int> domains = batch_domains(batch);

  ForwardOptions fwd;
  fwd.reverse_domain_gradient = config.domain_loss_mode == DomainLossMode::kAdversarialReversal;
  const ModelOutput out = forward(params, images, fwd);
  const LossTerms terms = total_loss(out, truth, domains, config.loss_options());
  require_finite(terms.breakdown.l0, "L0 (cross-entropy)");
  require_finite(terms.breakdown.l1, "L1 (dice)");
  require_finite(terms.breakdown.l2, "L2 (domain misalignment)");
  require_finite(terms.breakdown.total, "L (total)");
  terms.total.backward();

  ++state.step;
  for (auto& [name, t] : params.tensors) {
    if (!t.has_grad()) continue;
    if (config.optimizer == OptimizerKind::kSgd) {
      sgd_update(t.mutable_data(), t.grad(), config.learning_rate);
    } else {
      adam_update(t.mutable_data(), t.grad(), state.adam[name], config.learning_rate,
                  config.adam_beta1, config.adam_beta2, config.adam_eps);
    }
  }
  params.zero_grad();
  return terms.breakdown;
}

bool is_heldout(const std::string& id, std::uint64_t seed, Real fraction) {
  if (fraction <= 0.0) return false;
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  const std::uint64_t mixed = mix_seed(seed, h);
  const Real u = static_cast<Real>(mixed >> 11) * 0x1.0p-53;
  return u < fraction;
}

// --- evaluation ------------------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 16;

template <typename Fn>
void for_each_chunk(std::span<const Sample> samples, Fn fn) {
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    Batch batch;
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    batch.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(start),
                         samples.begin() + static_cast<std::ptrdiff_t>(end));
    fn(batch, start);
  }
}

}  // namespace

std::vector<MaskIndexed> predict_masks(const ModelParams& params, std::span<const Sample> samples) {
  NoGradGuard no_grad;
  std::vector<MaskIndexed> masks;
  for_each_chunk(samples, [&](const Batch& batch, std::size_t) {
    const MaskIndexed pred = predict_mask(forward(params, batch_images(batch)));
    for (Index s = 0; s < pred.n; ++s) masks.push_back(pred.sample(s));
  });
  return masks;
}

ConfusionMatrix confusion_on(const ModelParams& params, std::span<const Sample> samples) {
  ConfusionMatrix cm(params.arch.num_classes);
  const auto masks = predict_masks(params, samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].mask) fail(ErrorKind::kContract, "sample " + samples[i].id + " has no mask");
    confusion_accumulate(cm, masks[i], *samples[i].mask);
  }
  return cm;
}

Real mean_cross_entropy(const ModelParams& params, std::span<const Sample> samples) {
  NoGradGuard no_grad;
  Real acc = 0.0;
  Real pixels = 0.0;
  for_each_chunk(samples, [&](const Batch& batch, std::size_t) {
    const auto truth = batch_truth(batch);
    if (!truth) return;
    const Real count = static_cast<Real>(std::count_if(
        truth->values.begin(), truth->values.end(), [](std::uint8_t v) { return v != kIgnoreIndex; }));
    acc += cross_entropy_pixelwise(forward(params, batch_images(batch)).seg_logits, *truth).item() * count;
    pixels += count;
  });
  if (pixels == 0.0) fail(ErrorKind::kEvaluation, "mean_cross_entropy: no labelled pixels");
  return acc / pixels;
}

Real domain_accuracy(const ModelParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return std::numeric_limits<Real>::quiet_NaN();
  NoGradGuard no_grad;
  Index correct = 0;
  for_each_chunk(samples, [&](const Batch& batch, std::size_t) {
    const Tensor logits = forward(params, batch_images(batch)).domain_logits;
    const Index m = logits.dim(1);
    for (Index s = 0; s < logits.dim(0); ++s) {
      Index best = 0;
      for (Index c = 1; c < m; ++c) {
        if (logits.data()[s * m + c] > logits.data()[s * m + best]) best = c;
      }
      correct += best == batch.samples[static_cast<std::size_t>(s)].domain.index;
    }
  });
  return static_cast<Real>(correct) / static_cast<Real>(samples.size());
}

// --- training loop ------------------------------------------------------------------

TrainResult train_loop(std::span<const Dataset> datasets, const ArchConfig& arch,
                       const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  arch.validate();
  if (std::none_of(datasets.begin(), datasets.end(),
                   [](const Dataset& d) { return d.spec.labelled; })) {
    fail(ErrorKind::kConfig, "training needs at least one labelled dataset");
  }

  std::vector<Dataset> train_sets;
  std::vector<Sample> heldout_labelled, heldout_all;
  for (const Dataset& d : datasets) {
    Dataset kept{d.spec, {}};
    for (const Sample& s : d.samples) {
      if (is_heldout(s.id, config.seed, config.holdout_fraction)) {
        heldout_all.push_back(s);
        if (d.spec.labelled) heldout_labelled.push_back(s);
      } else {
        kept.samples.push_back(s);
      }
    }
    kept.spec.count = static_cast<Index>(kept.samples.size());
    train_sets.push_back(std::move(kept));
  }
  if (config.holdout_fraction > 0.0 && heldout_labelled.empty()) {
    fail(ErrorKind::kConfig, "held-out split is empty; add labelled data or raise holdout_fraction");
  }

  TrainResult result;
  Checkpoint& cp = result.checkpoint;
  if (options.resume) {
    cp = *options.resume;
    cp.params = options.resume->params.clone();
    if (!(cp.params.arch == arch)) fail(ErrorKind::kConfig, "resume: architecture mismatch");
  } else {
    cp.params = init_params(arch, config.seed);
  }
  cp.config = config;

  const BatchStream stream(train_sets, config.batch_size, config.labelled_fraction, config.seed);
  for (int epoch = cp.epoch; epoch < config.epochs; ++epoch) {
    std::vector<Batch> batches = stream.epoch(epoch);
    EpochLog summary;
    summary.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Batch& batch = batches[b];
      if (config.augment.enabled()) {
        for (std::size_t i = 0; i < batch.samples.size(); ++i) {
          const std::uint64_t seed = mix_seed(
              mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)), b), i);
          batch.samples[i] = augment(batch.samples[i], seed, config.augment);
        }
      }
      const LossBreakdown loss = train_step(cp.params, batch, config, cp.optimizer);
      cp.log.steps.push_back({epoch, loss});
      summary.mean_l0 += loss.l0;
      summary.mean_l1 += loss.l1;
      summary.mean_l2 += loss.l2;
      summary.mean_total += loss.total;
    }
    const Real steps = static_cast<Real>(batches.size());
    summary.mean_l0 /= steps;
    summary.mean_l1 /= steps;
    summary.mean_l2 /= steps;
    summary.mean_total /= steps;
    summary.heldout_accuracy = summary.heldout_mean_f1 = summary.heldout_mean_iou =
        std::numeric_limits<Real>::quiet_NaN();
    if (!heldout_labelled.empty()) {
      const MetricsReport report = compute_report(confusion_on(cp.params, heldout_labelled));
      summary.heldout_accuracy = report.overall_accuracy;
      summary.heldout_mean_f1 = report.mean_f1;
      summary.heldout_mean_iou = report.mean_iou;
    }
    summary.domain_accuracy = domain_accuracy(cp.params, heldout_all);
    cp.log.epochs.push_back(summary);
    cp.epoch = epoch + 1;
    if (options.on_epoch) options.on_epoch(summary);
  }
  if (!heldout_labelled.empty()) {
    result.final_heldout = compute_report(confusion_on(cp.params, heldout_labelled));
  }
  return result;
}

// --- checkpoint encoding -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'E', 'O', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(Real v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void array(const Array& a) {
    u64(static_cast<std::uint64_t>(a.size()));
    for (Index i = 0; i < a.size(); ++i) f64(a[i]);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail(ErrorKind::kCorruption, "checkpoint is truncated");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  Real f64() { return std::bit_cast<Real>(u64()); }
  std::uint64_t count(std::size_t element_size) {
    const std::uint64_t n = u64();
    if (element_size > 0 && n > (in_.size() - pos_) / element_size) {
      fail(ErrorKind::kCorruption, "checkpoint is truncated");
    }
    return n;
  }
  std::string str() {
    const std::uint64_t n = count(1);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Array array() {
    const std::uint64_t n = count(8);
    Array a(static_cast<Index>(n));
    for (Index i = 0; i < a.size(); ++i) a[i] = f64();
    return a;
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_arch(Writer& w, const ArchConfig& a) {
  w.i64(a.in_channels);
  w.i64(a.num_classes);
  w.i64(a.num_domains);
  for (Index s : a.stage_widths) w.i64(s);
  w.i64(a.decoder_width);
  w.i64(a.input_height);
  w.i64(a.input_width);
}

ArchConfig read_arch(Reader& r) {
  ArchConfig a;
  a.in_channels = r.i64();
  a.num_classes = r.i64();
  a.num_domains = r.i64();
  for (Index& s : a.stage_widths) s = r.i64();
  a.decoder_width = r.i64();
  a.input_height = r.i64();
  a.input_width = r.i64();
  return a;
}

void write_config(Writer& w, const TrainConfig& c) {
  w.f64(c.lambda1);
  w.f64(c.lambda2);
  w.f64(c.learning_rate);
  w.u32(c.optimizer == OptimizerKind::kAdam ? 1 : 0);
  w.f64(c.adam_beta1);
  w.f64(c.adam_beta2);
  w.f64(c.adam_eps);
  w.i64(c.batch_size);
  w.f64(c.labelled_fraction);
  w.i64(c.epochs);
  w.u64(c.seed);
  w.u32(c.domain_loss_mode == DomainLossMode::kAdversarialReversal ? 1 : 0);
  w.f64(c.eps_clamp);
  w.f64(c.dice_smoothing);
  w.u32((c.augment.hflip ? 1U : 0U) | (c.augment.vflip ? 2U : 0U) | (c.augment.rot90 ? 4U : 0U));
  w.u64(c.augment.downsample_factors.size());
  for (int f : c.augment.downsample_factors) w.i64(f);
  w.f64(c.holdout_fraction);
}

TrainConfig read_config(Reader& r) {
  TrainConfig c;
  c.lambda1 = r.f64();
  c.lambda2 = r.f64();
  c.learning_rate = r.f64();
  c.optimizer = r.u32() == 1 ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  c.adam_beta1 = r.f64();
  c.adam_beta2 = r.f64();
  c.adam_eps = r.f64();
  c.batch_size = r.i64();
  c.labelled_fraction = r.f64();
  c.epochs = static_cast<int>(r.i64());
  c.seed = r.u64();
  c.domain_loss_mode = r.u32() == 1 ? DomainLossMode::kAdversarialReversal : DomainLossMode::kLiteral;
  c.eps_clamp = r.f64();
  c.dice_smoothing = r.f64();
  const std::uint32_t flags = r.u32();
  c.augment.hflip = flags & 1U;
  c.augment.vflip = flags & 2U;
  c.augment.rot90 = flags & 4U;
  c.augment.downsample_factors.resize(r.count(8));
  for (int& f : c.augment.downsample_factors) f = static_cast<int>(r.i64());
  c.holdout_fraction = r.f64();
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& cp) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  write_arch(w, cp.params.arch);
  w.u64(cp.params.seed);
  write_config(w, cp.config);
  w.i64(cp.epoch);

  w.u64(cp.params.tensors.size());
  for (const auto& [name, t] : cp.params.tensors) {
    w.str(name);
    w.u64(t.rank());
    for (Index d : t.shape()) w.i64(d);
    w.array(t.data());
  }

  w.i64(cp.optimizer.step);
  w.u64(cp.optimizer.adam.size());
  for (const auto& [name, s] : cp.optimizer.adam) {
    w.str(name);
    w.i64(s.step);
    w.array(s.m);
    w.array(s.v);
  }

  w.u64(cp.log.steps.size());
  for (const StepLog& s : cp.log.steps) {
    w.i64(s.epoch);
    for (Real v : {s.loss.l0, s.loss.l1, s.loss.l2, s.loss.lambda1, s.loss.lambda2, s.loss.total}) {
      w.f64(v);
    }
  }
  w.u64(cp.log.epochs.size());
  for (const EpochLog& e : cp.log.epochs) {
    w.i64(e.epoch);
    for (Real v : {e.mean_l0, e.mean_l1, e.mean_l2, e.mean_total, e.heldout_accuracy,
                   e.heldout_mean_f1, e.heldout_mean_iou, e.domain_accuracy}) {
      w.f64(v);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[sizeof(kMagic)] = {};
  if (bytes.size() < sizeof(kMagic)) fail(ErrorKind::kFormat, "not a checkpoint: file too short");
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::kFormat, "not a checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version) +
                                 " (this build reads version " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint cp;
  cp.params.arch = read_arch(r);
  cp.params.seed = r.u64();
  cp.config = read_config(r);
  cp.epoch = static_cast<int>(r.i64());

  const std::uint64_t tensors = r.count(1);
  for (std::uint64_t i = 0; i < tensors; ++i) {
    const std::string name = r.str();
    Shape shape(r.count(8));
    for (Index& d : shape) d = r.i64();
    Array data = r.array();
    if (numel(shape) != data.size()) fail(ErrorKind::kCorruption, "tensor " + name + " size mismatch");
    cp.params.tensors.emplace(name, Tensor(std::move(shape), std::move(data), true));
  }

  cp.optimizer.step = r.i64();
  const std::uint64_t moments = r.count(1);
  for (std::uint64_t i = 0; i < moments; ++i) {
    const std::string name = r.str();
    AdamState s;
    s.step = r.i64();
    s.m = r.array();
    s.v = r.array();
    cp.optimizer.adam.emplace(name, std::move(s));
  }

  cp.log.steps.resize(r.count(56));
  for (StepLog& s : cp.log.steps) {
    s.epoch = static_cast<int>(r.i64());
    for (Real* v : {&s.loss.l0, &s.loss.l1, &s.loss.l2, &s.loss.lambda1, &s.loss.lambda2,
                    &s.loss.total}) {
      *v = r.f64();
    }
  }
  cp.log.epochs.resize(r.count(72));
  for (EpochLog& e : cp.log.epochs) {
    e.epoch = static_cast<int>(r.i64());
    for (Real* v : {&e.mean_l0, &e.mean_l1, &e.mean_l2, &e.mean_total, &e.heldout_accuracy,
                    &e.heldout_mean_f1, &e.heldout_mean_iou, &e.domain_accuracy}) {
      *v = r.f64();
    }
  }
  if (!r.done()) fail(ErrorKind::kCorruption, "checkpoint has trailing bytes");
  cp.params.arch.validate();
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void write_step_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "step,epoch,l0,l1,l2,total\n";
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const StepLog& s = log.steps[i];
    out << i << ',' << s.epoch << ',' << format_real(s.loss.l0) << ',' << format_real(s.loss.l1)
        << ',' << format_real(s.loss.l2) << ',' << format_real(s.loss.total) << "\n";
  }
}

void write_epoch_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "epoch,mean_l0,mean_l1,mean_l2,mean_total,heldout_accuracy,heldout_mean_f1,"
         "heldout_mean_iou,domain_accuracy\n";
  for (const EpochLog& e : log.epochs) {
    out << e.epoch << ',' << format_real(e.mean_l0) << ',' << format_real(e.mean_l1) << ','
        << format_real(e.mean_l2) << ',' << format_real(e.mean_total) << ','
        << format_real(e.heldout_accuracy) << ',' << format_real(e.heldout_mean_f1) << ','
        << format_real(e.heldout_mean_iou) << ',' << format_real(e.domain_accuracy) << "\n";
  }
}

}  // namespace neos
