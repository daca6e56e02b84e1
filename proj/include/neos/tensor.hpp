// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace neos {

using Real = double;
using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::Array<Real, Eigen::Dynamic, 1>;

/// Row-major matrix view used for the GEMM-backed kernels.
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

struct Node;

/// Dense NCHW tensor of 64-bit reals with a reverse-mode gradient slot.
///
/// Tensor is a handle: copies share storage. `clone()` makes a deep copy and
/// `detach()` a graph-free alias-free copy. Data is row-major with the last
/// axis fastest.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Array data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  const Shape& shape() const;
  Index dim(std::size_t axis) const;
  std::size_t rank() const;
  Index numel() const;

  const Array& data() const;
  /// Mutable access for leaves (parameters, inputs). Mutating a tensor that is
  /// an input to a live graph invalidates that graph's saved activations.
  Array& mutable_data();
  Real item() const;
  Real at(std::initializer_list<Index> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  const Array& grad() const;
  Array& mutable_grad();
  void zero_grad();
  void clear_grad();

  bool is_leaf() const;
  const std::shared_ptr<Node>& node() const;

  Tensor clone() const;
  Tensor detach() const;

  /// Gradient of this scalar w.r.t. every requires_grad tensor reachable from
  /// it. Leaf gradients accumulate across calls; intermediate gradients are
  /// reset, so calling twice without zero_grad() doubles the leaf gradients.
  void backward() const;

  bool same(const Tensor& other) const { return impl_ == other.impl_; }
  const void* identity() const { return impl_.get(); }
  bool defined() const { return impl_ != nullptr; }

  /// Builds the result of a primitive. If any input requires grad and
  /// recording is enabled, the result is attached to a new graph node whose
  /// `backward` is called with the result's gradient.
  static Tensor make_result(const char* kind, Shape shape, Array data,
                            std::vector<Tensor> inputs,
                            std::function<void(const Array&)> backward);

 private:
  struct Impl {
    Shape shape;
    Array data;
    bool requires_grad = false;
    Array grad;
    std::shared_ptr<Node> node;
  };
  std::shared_ptr<Impl> impl_;
};

/// A recorded primitive. `backward` receives the gradient of the node's output
/// and accumulates into the gradients of `inputs`.
struct Node {
  std::uint64_t id = 0;
  const char* kind = "";
  std::vector<Tensor> inputs;
  std::function<void(const Array& out_grad)> backward;
};

/// Accumulates `g` into `t`'s gradient slot, allocating it on first use.
/// No-op when `t` does not require grad.
void accumulate_grad(const Tensor& t, const Array& g);

/// Gradient slot of `t`, allocated as zeros on first use; nullptr when `t`
/// does not require grad.
Array* grad_buffer(const Tensor& t);

/// True while graph recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reachable subgraph of a scalar, ordered so every node's inputs precede it.
class Graph {
 public:
  static Graph collect(const Tensor& root);

  /// Tensors carrying a node, in topological order.
  const std::vector<Tensor>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Tensor> order_;
};

// --- primitives ---------------------------------------------------------

/// Cross-correlation of x[N,C,H,W] with kernel[F,C,kh,kw] plus bias[F].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Index stride = 1, Index padding = 0);
Tensor relu(const Tensor& input);
/// Log-softmax over axis 1 of a [N,K,H,W] or [N,K] tensor.
Tensor log_softmax_channelwise(const Tensor& input);
/// Softmax over axis 1 of a [N,K,H,W] or [N,K] tensor.
Tensor softmax_channelwise(const Tensor& input);
Tensor upsample_nearest(const Tensor& input, Index factor);
/// Mean over non-overlapping factor x factor windows.
Tensor avg_pool2d(const Tensor& input, Index factor);
/// [N,C,H,W] -> [N,C].
Tensor global_average_pool(const Tensor& input);
/// Concatenation of [N,Ci,H,W] tensors along axis 1.
Tensor concat_channels(std::span<const Tensor> inputs);
/// x[N,C] W^T + b with weight[M,C], bias[M].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
/// Identity forward; multiplies the incoming gradient by -scale.
Tensor gradient_reversal(const Tensor& input, Real scale = 1.0);
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);
Tensor square(const Tensor& input);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(Real s, const Tensor& a);
Tensor operator*(const Tensor& a, const Tensor& b);

}  // namespace neos
