// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "neos/error.hpp"

namespace neos {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};
thread_local bool t_grad_enabled = true;

void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.rank() == rank, ErrorKind::kDimension,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
              shape_string(t.shape()));
}

// Column buffer for one sample: rows (c, i, j), columns (oy, ox).
void im2col(const Real* x, Index channels, Index height, Index width, Index kh,
            Index kw, Index stride, Index pad, Index out_h, Index out_w,
            RowMatrix& col) {
  col.resize(channels * kh * kw, out_h * out_w);
  for (Index c = 0; c < channels; ++c) {
    const Real* plane = x + c * height * width;
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        Real* row = col.data() + ((c * kh + i) * kw + j) * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index y = oy * stride - pad + i;
          Real* dst = row + oy * out_w;
          if (y < 0 || y >= height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index xx = ox * stride - pad + j;
            dst[ox] = (xx < 0 || xx >= width) ? 0.0 : plane[y * width + xx];
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& col, Index channels, Index height, Index width,
            Index kh, Index kw, Index stride, Index pad, Index out_h,
            Index out_w, Real* dx) {
  for (Index c = 0; c < channels; ++c) {
    Real* plane = dx + c * height * width;
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const Real* row = col.data() + ((c * kh + i) * kw + j) * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index y = oy * stride - pad + i;
          if (y < 0 || y >= height) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index xx = ox * stride - pad + j;
            if (xx < 0 || xx >= width) continue;
            plane[y * width + xx] += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

// Splits a channelwise tensor into (batch, channels, spatial).
struct ChannelLayout {
  Index n, k, spatial;
};

ChannelLayout channel_layout(const Tensor& t, const char* op) {
  require(t.rank() == 2 || t.rank() == 4, ErrorKind::kDimension,
          std::string(op) + ": expected [N,K] or [N,K,H,W], got " +
              shape_string(t.shape()));
  const Index spatial = t.rank() == 4 ? t.dim(2) * t.dim(3) : 1;
  return {t.dim(0), t.dim(1), spatial};
}

}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{1}) {}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, Array::Zero(neos::numel(shape)), requires_grad) {}

Tensor::Tensor(Shape shape, Array data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (Index d : shape) {
    require(d > 0, ErrorKind::kDimension,
            "tensor dimensions must be positive: " + shape_string(shape));
  }
  require(neos::numel(shape) == data.size(), ErrorKind::kDimension,
          "data length " + std::to_string(data.size()) + " does not match shape " +
              shape_string(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const Index n = neos::numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<Real> values,
                    bool requires_grad) {
  Array data(static_cast<Index>(values.size()));
  std::copy(values.begin(), values.end(), data.data());
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return full(Shape{1}, value, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
Index Tensor::dim(std::size_t axis) const { return impl_->shape.at(axis); }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
Index Tensor::numel() const { return impl_->data.size(); }
const Array& Tensor::data() const { return impl_->data; }
Array& Tensor::mutable_data() { return impl_->data; }

Real Tensor::item() const {
  require(numel() == 1, ErrorKind::kContract,
          "item() on non-scalar tensor " + shape_string(shape()));
  return impl_->data[0];
}

Real Tensor::at(std::initializer_list<Index> index) const {
  require(index.size() == rank(), ErrorKind::kDimension, "index rank mismatch");
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    require(i >= 0 && i < dim(axis), ErrorKind::kDimension, "index out of range");
    flat = flat * dim(axis) + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return impl_->grad.size() != 0; }

const Array& Tensor::grad() const {
  require(has_grad(), ErrorKind::kContract, "tensor has no gradient");
  return impl_->grad;
}

Array& Tensor::mutable_grad() {
  if (!has_grad()) impl_->grad = Array::Zero(numel());
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) impl_->grad.setZero();
}

void Tensor::clear_grad() { impl_->grad.resize(0); }

bool Tensor::is_leaf() const { return impl_->node == nullptr; }
const std::shared_ptr<Node>& Tensor::node() const { return impl_->node; }

Tensor Tensor::clone() const {
  Tensor t(shape(), data(), requires_grad());
  if (has_grad()) t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), data(), false); }

Tensor Tensor::make_result(const char* kind, Shape shape, Array data,
                           std::vector<Tensor> inputs,
                           std::function<void(const Array&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  auto node = std::make_shared<Node>();
  node->id = g_next_node_id.fetch_add(1);
  node->kind = kind;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

void Tensor::backward() const {
  require(numel() == 1, ErrorKind::kContract,
          "backward() requires a scalar loss, got " + shape_string(shape()));
  if (!requires_grad()) return;
  const Graph graph = Graph::collect(*this);
  for (const Tensor& t : graph.nodes()) t.impl_->grad.resize(0);
  if (is_leaf()) {
    accumulate_grad(*this, Array::Ones(1));
    return;
  }
  impl_->grad = Array::Ones(1);
  const auto& order = graph.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!it->has_grad()) continue;
    it->node()->backward(it->impl_->grad);
  }
}

void accumulate_grad(const Tensor& t, const Array& g) {
  if (Array* slot = grad_buffer(t)) *slot += g;
}

Array* grad_buffer(const Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  return &const_cast<Tensor&>(t).mutable_grad();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Graph Graph::collect(const Tensor& root) {
  Graph graph;
  std::unordered_set<const void*> visited;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::vector<std::pair<Tensor, std::size_t>> stack;
  if (root.node()) {
    stack.emplace_back(root, 0);
    visited.insert(root.identity());
  }
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& inputs = t.node()->inputs;
    if (next < inputs.size()) {
      const Tensor child = inputs[next++];
      if (child.node() && visited.insert(child.identity()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    graph.order_.push_back(t);
    stack.pop_back();
  }
  return graph;
}

// --- primitives -------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Index stride, Index padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  require_rank(bias, 1, "conv2d bias");
  require(stride >= 1 && padding >= 0, ErrorKind::kConfig,
          "conv2d: stride must be positive and padding non-negative");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  require(kernel.dim(1) == c, ErrorKind::kDimension,
          "conv2d: kernel " + shape_string(kernel.shape()) +
              " does not match input channels of " + shape_string(input.shape()));
  require(bias.dim(0) == f, ErrorKind::kDimension, "conv2d: bias length mismatch");
  require(kh % 2 == 1 && kw % 2 == 1, ErrorKind::kConfig,
          "conv2d: kernel extents must be odd");
  const Index span_h = h + 2 * padding - kh, span_w = w + 2 * padding - kw;
  require(span_h >= 0 && span_w >= 0 && span_h % stride == 0 && span_w % stride == 0,
          ErrorKind::kConfig, "conv2d: output size is not integral for input " +
                                  shape_string(input.shape()));
  const Index oh = span_h / stride + 1, ow = span_w / stride + 1;
  const Index ckk = c * kh * kw, plane = oh * ow;

  Eigen::Map<const RowMatrix> wmat(kernel.data().data(), f, ckk);
  Array out(n * f * plane);
  RowMatrix col;
  for (Index s = 0; s < n; ++s) {
    im2col(input.data().data() + s * c * h * w, c, h, w, kh, kw, stride, padding,
           oh, ow, col);
    Eigen::Map<RowMatrix> o(out.data() + s * f * plane, f, plane);
    o.noalias() = wmat * col;
    o.colwise() += bias.data().matrix();
  }

  return Tensor::make_result(
      "conv2d", Shape{n, f, oh, ow}, std::move(out), {input, kernel, bias},
      [=](const Array& g) {
        Array* dx = grad_buffer(input);
        Array* dk = grad_buffer(kernel);
        Array* db = grad_buffer(bias);
        Eigen::Map<const RowMatrix> wm(kernel.data().data(), f, ckk);
        RowMatrix col_buf, dcol;
        for (Index s = 0; s < n; ++s) {
          Eigen::Map<const RowMatrix> go(g.data() + s * f * plane, f, plane);
          if (db) db->matrix() += go.rowwise().sum();
          if (dk) {
            im2col(input.data().data() + s * c * h * w, c, h, w, kh, kw, stride,
                   padding, oh, ow, col_buf);
            Eigen::Map<RowMatrix> dkm(dk->data(), f, ckk);
            dkm.noalias() += go * col_buf.transpose();
          }
          if (dx) {
            dcol.noalias() = wm.transpose() * go;
            col2im(dcol, c, h, w, kh, kw, stride, padding, oh, ow,
                   dx->data() + s * c * h * w);
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  Array out = input.data().max(0.0);
  return Tensor::make_result("relu", input.shape(), std::move(out), {input},
                             [input](const Array& g) {
                               accumulate_grad(input,
                                               (input.data() > 0.0).select(g, 0.0));
                             });
}

Tensor log_softmax_channelwise(const Tensor& input) {
  const auto [n, k, sp] = channel_layout(input, "log_softmax_channelwise");
  require(k >= 2, ErrorKind::kConfig, "log_softmax_channelwise: need at least 2 channels");
  const Array& x = input.data();
  Array out(x.size());
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < sp; ++p) {
      const Index base = s * k * sp + p;
      Real m = x[base];
      for (Index c = 1; c < k; ++c) m = std::max(m, x[base + c * sp]);
      Real z = 0.0;
      for (Index c = 0; c < k; ++c) z += std::exp(x[base + c * sp] - m);
      const Real lz = m + std::log(z);
      for (Index c = 0; c < k; ++c) out[base + c * sp] = x[base + c * sp] - lz;
    }
  }
  Array saved = out;
  return Tensor::make_result(
      "log_softmax", input.shape(), std::move(out), {input},
      [input, saved = std::move(saved), n = n, k = k, sp = sp](const Array& g) {
        Array dx(g.size());
        for (Index s = 0; s < n; ++s) {
          for (Index p = 0; p < sp; ++p) {
            const Index base = s * k * sp + p;
            Real gs = 0.0;
            for (Index c = 0; c < k; ++c) gs += g[base + c * sp];
            for (Index c = 0; c < k; ++c) {
              const Index i = base + c * sp;
              dx[i] = g[i] - std::exp(saved[i]) * gs;
            }
          }
        }
        accumulate_grad(input, dx);
      });
}

Tensor softmax_channelwise(const Tensor& input) {
  const auto [n, k, sp] = channel_layout(input, "softmax_channelwise");
  require(k >= 2, ErrorKind::kConfig, "softmax_channelwise: need at least 2 channels");
  const Array& x = input.data();
  Array out(x.size());
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < sp; ++p) {
      const Index base = s * k * sp + p;
      Real m = x[base];
      for (Index c = 1; c < k; ++c) m = std::max(m, x[base + c * sp]);
      Real z = 0.0;
      for (Index c = 0; c < k; ++c) {
        out[base + c * sp] = std::exp(x[base + c * sp] - m);
        z += out[base + c * sp];
      }
      for (Index c = 0; c < k; ++c) out[base + c * sp] /= z;
    }
  }
  Array saved = out;
  return Tensor::make_result(
      "softmax", input.shape(), std::move(out), {input},
      [input, saved = std::move(saved), n = n, k = k, sp = sp](const Array& g) {
        Array dx(g.size());
        for (Index s = 0; s < n; ++s) {
          for (Index p = 0; p < sp; ++p) {
            const Index base = s * k * sp + p;
            Real dot = 0.0;
            for (Index c = 0; c < k; ++c) dot += g[base + c * sp] * saved[base + c * sp];
            for (Index c = 0; c < k; ++c) {
              const Index i = base + c * sp;
              dx[i] = saved[i] * (g[i] - dot);
            }
          }
        }
        accumulate_grad(input, dx);
      });
}

Tensor upsample_nearest(const Tensor& input, Index factor) {
  require_rank(input, 4, "upsample_nearest");
  require(factor >= 1, ErrorKind::kConfig, "upsample_nearest: factor must be >= 1");
  const Index planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = h * factor, ow = w * factor;
  const Array& x = input.data();
  Array out(planes * oh * ow);
  for (Index p = 0; p < planes; ++p) {
    for (Index y = 0; y < oh; ++y) {
      for (Index xx = 0; xx < ow; ++xx) {
        out[(p * oh + y) * ow + xx] = x[(p * h + y / factor) * w + xx / factor];
      }
    }
  }
  return Tensor::make_result(
      "upsample_nearest", Shape{input.dim(0), input.dim(1), oh, ow}, std::move(out),
      {input}, [=](const Array& g) {
        Array dx = Array::Zero(planes * h * w);
        for (Index p = 0; p < planes; ++p) {
          for (Index y = 0; y < oh; ++y) {
            for (Index xx = 0; xx < ow; ++xx) {
              dx[(p * h + y / factor) * w + xx / factor] += g[(p * oh + y) * ow + xx];
            }
          }
        }
        accumulate_grad(input, dx);
      });
}

Tensor avg_pool2d(const Tensor& input, Index factor) {
  require_rank(input, 4, "avg_pool2d");
  require(factor >= 1, ErrorKind::kConfig, "avg_pool2d: factor must be >= 1");
  const Index planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h % factor == 0 && w % factor == 0, ErrorKind::kDimension,
          "avg_pool2d: spatial size " + shape_string(input.shape()) +
              " not divisible by " + std::to_string(factor));
  const Index oh = h / factor, ow = w / factor;
  const Real scale = 1.0 / static_cast<Real>(factor * factor);
  const Array& x = input.data();
  Array out = Array::Zero(planes * oh * ow);
  for (Index p = 0; p < planes; ++p) {
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) {
        out[(p * oh + y / factor) * ow + xx / factor] += x[(p * h + y) * w + xx];
      }
    }
  }
  out *= scale;
  return Tensor::make_result(
      "avg_pool2d", Shape{input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
      [=](const Array& g) {
        Array dx(planes * h * w);
        for (Index p = 0; p < planes; ++p) {
          for (Index y = 0; y < h; ++y) {
            for (Index xx = 0; xx < w; ++xx) {
              dx[(p * h + y) * w + xx] = scale * g[(p * oh + y / factor) * ow + xx / factor];
            }
          }
        }
        accumulate_grad(input, dx);
      });
}

Tensor global_average_pool(const Tensor& input) {
  require_rank(input, 4, "global_average_pool");
  const Index n = input.dim(0), c = input.dim(1), sp = input.dim(2) * input.dim(3);
  Eigen::Map<const RowMatrix> x(input.data().data(), n * c, sp);
  Array out = x.rowwise().mean().array();
  return Tensor::make_result("global_average_pool", Shape{n, c}, std::move(out), {input},
                             [=](const Array& g) {
                               Array dx(n * c * sp);
                               for (Index r = 0; r < n * c; ++r) {
                                 dx.segment(r * sp, sp).setConstant(g[r] / static_cast<Real>(sp));
                               }
                               accumulate_grad(input, dx);
                             });
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  require(!inputs.empty(), ErrorKind::kContract, "concat_channels: no inputs");
  for (const Tensor& t : inputs) require_rank(t, 4, "concat_channels");
  const Index n = inputs[0].dim(0), h = inputs[0].dim(2), w = inputs[0].dim(3);
  Index channels = 0;
  for (const Tensor& t : inputs) {
    require(t.dim(0) == n && t.dim(2) == h && t.dim(3) == w, ErrorKind::kDimension,
            "concat_channels: mismatched shapes " + shape_string(t.shape()));
    channels += t.dim(1);
  }
  const Index sp = h * w;
  Array out(n * channels * sp);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const Tensor& t : inputs) {
    offsets.push_back(offset);
    const Index block = t.dim(1) * sp;
    for (Index s = 0; s < n; ++s) {
      out.segment(s * channels * sp + offset * sp, block) = t.data().segment(s * block, block);
    }
    offset += t.dim(1);
  }
  std::vector<Tensor> parts(inputs.begin(), inputs.end());
  return Tensor::make_result(
      "concat_channels", Shape{n, channels, h, w}, std::move(out), parts,
      [=](const Array& g) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
          Array* dx = grad_buffer(parts[i]);
          if (!dx) continue;
          const Index block = parts[i].dim(1) * sp;
          for (Index s = 0; s < n; ++s) {
            dx->segment(s * block, block) += g.segment(s * channels * sp + offsets[i] * sp, block);
          }
        }
      });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const Index n = input.dim(0), c = input.dim(1), m = weight.dim(0);
  require(weight.dim(1) == c && bias.dim(0) == m, ErrorKind::kDimension,
          "linear: weight " + shape_string(weight.shape()) + " incompatible with input " +
              shape_string(input.shape()));
  Eigen::Map<const RowMatrix> x(input.data().data(), n, c);
  Eigen::Map<const RowMatrix> wm(weight.data().data(), m, c);
  Array out(n * m);
  Eigen::Map<RowMatrix> o(out.data(), n, m);
  o.noalias() = x * wm.transpose();
  o.rowwise() += bias.data().matrix().transpose();
  return Tensor::make_result(
      "linear", Shape{n, m}, std::move(out), {input, weight, bias},
      [=](const Array& g) {
        Eigen::Map<const RowMatrix> go(g.data(), n, m);
        Eigen::Map<const RowMatrix> xm(input.data().data(), n, c);
        Eigen::Map<const RowMatrix> wmm(weight.data().data(), m, c);
        if (Array* dx = grad_buffer(input)) {
          Eigen::Map<RowMatrix>(dx->data(), n, c).noalias() += go * wmm;
        }
        if (Array* dw = grad_buffer(weight)) {
          Eigen::Map<RowMatrix>(dw->data(), m, c).noalias() += go.transpose() * xm;
        }
        if (Array* db = grad_buffer(bias)) {
          db->matrix() += go.colwise().sum().transpose();
        }
      });
}

Tensor gradient_reversal(const Tensor& input, Real scale) {
  return Tensor::make_result("gradient_reversal", input.shape(), input.data(), {input},
                             [input, scale](const Array& g) {
                               accumulate_grad(input, -scale * g);
                             });
}

Tensor sum(const Tensor& input) {
  return Tensor::make_result("sum", Shape{1}, Array::Constant(1, input.data().sum()),
                             {input}, [input](const Array& g) {
                               accumulate_grad(input, Array::Constant(input.numel(), g[0]));
                             });
}

Tensor mean(const Tensor& input) {
  const Real count = static_cast<Real>(input.numel());
  return Tensor::make_result("mean", Shape{1},
                             Array::Constant(1, input.data().sum() / count), {input},
                             [input, count](const Array& g) {
                               accumulate_grad(input,
                                               Array::Constant(input.numel(), g[0] / count));
                             });
}

Tensor square(const Tensor& input) {
  return Tensor::make_result("square", input.shape(), input.data().square(), {input},
                             [input](const Array& g) {
                               accumulate_grad(input, 2.0 * input.data() * g);
                             });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  return Tensor::make_result("add", a.shape(), a.data() + b.data(), {a, b},
                             [a, b](const Array& g) {
                               accumulate_grad(a, g);
                               accumulate_grad(b, g);
                             });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          "sub: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  return Tensor::make_result("sub", a.shape(), a.data() - b.data(), {a, b},
                             [a, b](const Array& g) {
                               accumulate_grad(a, g);
                               accumulate_grad(b, -g);
                             });
}

Tensor operator*(Real s, const Tensor& a) {
  return Tensor::make_result("scale", a.shape(), s * a.data(), {a},
                             [a, s](const Array& g) { accumulate_grad(a, s * g); });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kDimension,
          "mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  return Tensor::make_result("mul", a.shape(), a.data() * b.data(), {a, b},
                             [a, b](const Array& g) {
                               accumulate_grad(a, g * b.data());
                               accumulate_grad(b, g * a.data());
                             });
}

}  // namespace neos
