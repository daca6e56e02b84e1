// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "neos/error.hpp"
#include "neos/gradcheck.hpp"
#include "neos/tensor.hpp"
#include "support.hpp"

namespace neos {
namespace {

using testing::random_away_from_zero;
using testing::random_tensor;

// Direct sliding-window sum, independent of the im2col path.
std::vector<Real> naive_conv(const Tensor& x, const Tensor& k, const Tensor& b, Index stride,
                             Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<Real> out;
  for (Index in = 0; in < n; ++in)
    for (Index jf = 0; jf < f; ++jf)
      for (Index y = 0; y < ho; ++y)
        for (Index xx = 0; xx < wo; ++xx) {
          Real acc = b.at({jf});
          for (Index ic = 0; ic < c; ++ic)
            for (Index dy = 0; dy < kh; ++dy)
              for (Index dx = 0; dx < kw; ++dx) {
                const Index sy = y * stride + dy - pad, sx = xx * stride + dx - pad;
                if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;
                acc += x.at({in, ic, sy, sx}) * k.at({jf, ic, dy, dx});
              }
          out.push_back(acc);
        }
  return out;
}

TEST(Conv2d, IdentityKernelLeavesInputUnchanged) {
  const Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d(x, Tensor::from({1, 1, 1, 1}, {1}), Tensor::zeros({1}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesKernelWithPaddingCountsNeighbours) {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor b = Tensor::zeros({1});
  const Tensor y = conv2d(x, k, b, 1, 1);
  const std::vector<Real> oracle = naive_conv(x, k, b, 1, 1);
  EXPECT_EQ(oracle[4], 9.0);
  EXPECT_EQ(oracle[0], 4.0);
  EXPECT_EQ(y.at({0, 0, 1, 1}), oracle[4]);
  EXPECT_EQ(y.at({0, 0, 0, 0}), oracle[0]);
}

TEST(Conv2d, MatchesSlidingWindowOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index stride = 1 + static_cast<Index>(seed % 2);
    const Index pad = static_cast<Index>(seed % 3) % 2;
    const Index h = stride == 2 ? 7 : 6;
    const Tensor x = random_tensor({2, 3, h, h}, seed);
    const Tensor k = random_tensor({4, 3, 3, 3}, seed + 100);
    const Tensor b = random_tensor({4}, seed + 200);
    const Tensor y = conv2d(x, k, b, stride, pad);
    const std::vector<Real> oracle = naive_conv(x, k, b, stride, pad);
    ASSERT_EQ(y.numel(), static_cast<Index>(oracle.size()));
    for (Index i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], oracle[i], 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  try {
    conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Conv2d, NonIntegralOutputOrEvenKernelIsConfigError) {
  try {
    conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 2, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  try {
    conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Relu, Examples) {
  const Tensor y = relu(Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 0.0);
  EXPECT_EQ(y.data()[2], 2.0);
  const Tensor pos = Tensor::from({3}, {0.5, 1, 7});
  const Tensor same = relu(pos);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(same.data()[i], pos.data()[i]);
}

TEST(Relu, GradientIsPositivityIndicator) {
  const Tensor x = Tensor::from({3}, {-1, 2, 0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);  // subgradient at the kink
}

TEST(LogSoftmax, UniformCases) {
  const Tensor two = log_softmax_channelwise(Tensor::zeros({1, 2, 1, 1}));
  EXPECT_NEAR(two.data()[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(two.data()[1], -std::log(2.0), 1e-15);
  const Tensor three = log_softmax_channelwise(Tensor::zeros({1, 3, 1, 1}));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(three.data()[i], -std::log(3.0), 1e-15);
}

TEST(LogSoftmax, LargeLogitsStayFinite) {
  const Tensor y = log_softmax_channelwise(Tensor::from({1, 2, 1, 1}, {1000, 0}));
  // Shifted analytic form: log_softmax = z - max - log(sum exp(z - max)).
  const Real lse = std::log1p(std::exp(-1000.0));
  EXPECT_TRUE(std::isfinite(y.data()[0]));
  EXPECT_NEAR(y.data()[0], -lse, 1e-12);
  EXPECT_NEAR(y.data()[1], -1000.0 - lse, 1e-9);
}

TEST(LogSoftmax, ExponentiatedOutputsSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor y = log_softmax_channelwise(random_tensor({2, 5, 3, 4}, seed, -30, 30));
    for (Index n = 0; n < 2; ++n)
      for (Index p = 0; p < 12; ++p) {
        Real s = 0.0;
        for (Index k = 0; k < 5; ++k) s += std::exp(y.at({n, k, p / 4, p % 4}));
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(LogSoftmax, SingleChannelIsConfigError) {
  try {
    log_softmax_channelwise(Tensor::zeros({1, 1, 2, 2}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Upsample, Examples) {
  const Tensor y = upsample_nearest(Tensor::from({1, 1, 1, 1}, {5}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], 5.0);
  const Tensor x = random_tensor({1, 2, 3, 3}, 4);
  const Tensor same = upsample_nearest(x, 1);
  for (Index i = 0; i < x.numel(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);
  const Tensor leaf = Tensor::from({1, 1, 1, 1}, {5}, true);
  sum(upsample_nearest(leaf, 2)).backward();
  EXPECT_EQ(leaf.grad()[0], 4.0);
}

TEST(GlobalAveragePool, Examples) {
  EXPECT_EQ(global_average_pool(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 2.5);
  EXPECT_EQ(global_average_pool(Tensor::full({1, 1, 3, 3}, 0.75)).item(), 0.75);
  const Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  sum(global_average_pool(x)).backward();
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(x.grad()[i], 0.25);
}

TEST(Backward, ScalarExamples) {
  const Tensor x = Tensor::scalar(3.0, true);
  square(x).backward();
  EXPECT_EQ(x.grad()[0], 6.0);

  const Tensor a = Tensor::scalar(-2.5, true), b = Tensor::scalar(11.0, true);
  (a + b).backward();
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(b.grad()[0], 1.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  const Tensor x = Tensor::zeros({2}, true);
  try {
    relu(x).backward();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Backward, SecondCallDoublesLeafGradients) {
  const Tensor x = Tensor::from({2}, {1.5, -2}, true);
  const Tensor loss = sum(square(x));
  loss.backward();
  const Array first = x.grad();
  loss.backward();
  for (Index i = 0; i < 2; ++i) EXPECT_EQ(x.grad()[i], 2.0 * first[i]);
}

TEST(Backward, UnusedLeafGetsExactlyZero) {
  const Tensor used = random_tensor({3}, 1, -1, 1, true);
  const Tensor unused = random_tensor({3}, 2, -1, 1, true);
  const Tensor loss = sum(square(used));
  (void)unused;
  loss.backward();
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(unused.has_grad() ? unused.grad()[i] : 0.0, 0.0);

  // A leaf in the graph whose path is multiplied by zero.
  const Tensor zero = Tensor::zeros({3});
  const Tensor dead = random_tensor({3}, 3, -1, 1, true);
  sum(square(used) + zero * dead).backward();
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(dead.grad()[i], 0.0);
}

TEST(Backward, ConvChainMatchesFiniteDifferences) {
  const Tensor k1 = random_tensor({2, 1, 3, 3}, 7);
  const Tensor k2 = random_tensor({1, 2, 3, 3}, 8);
  const Tensor b1 = random_tensor({2}, 9), b2 = random_tensor({1}, 10);
  auto f = [&](const Tensor& x) {
    return mean(square(conv2d(relu(conv2d(x, k1, b1, 1, 1)), k2, b2, 1, 1)));
  };
  const GradCheckResult r = finite_difference_check(f, random_tensor({1, 1, 6, 6}, 11));
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  const Tensor x = random_tensor({2, 3, 8, 8}, 21);
  const Tensor k = random_tensor({5, 3, 3, 3}, 22);
  const Tensor b = random_tensor({5}, 23);
  const Tensor y1 = log_softmax_channelwise(conv2d(x, k, b, 1, 1));
  const Tensor y2 = log_softmax_channelwise(conv2d(x, k, b, 1, 1));
  for (Index i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.data()[i], y2.data()[i]);
}

TEST(Graph, TopologicalOrderPutsInputsFirst) {
  const Tensor x = random_tensor({1, 1, 4, 4}, 1, -1, 1, true);
  const Tensor k = random_tensor({1, 1, 3, 3}, 2, -1, 1, true);
  const Tensor y = mean(relu(conv2d(x, k, Tensor::zeros({1}), 1, 1)));
  const Graph g = Graph::collect(y);
  std::vector<const void*> seen;
  for (const Tensor& t : g.nodes()) {
    if (t.node()) {
      for (const Tensor& in : t.node()->inputs) {
        if (!in.node()) continue;
        EXPECT_NE(std::find(seen.begin(), seen.end(), in.identity()), seen.end());
      }
    }
    EXPECT_EQ(std::find(seen.begin(), seen.end(), t.identity()), seen.end());
    seen.push_back(t.identity());
  }
  EXPECT_EQ(g.nodes().back().identity(), y.identity());
}

// --- finite-difference property over every primitive ----------------------------

constexpr int kSeeds = 20;

void expect_passes(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                   const char* what, std::uint64_t seed) {
  const GradCheckResult r = finite_difference_check(f, point);
  EXPECT_TRUE(r.passed) << what << " seed " << seed << " error " << r.max_relative_error;
}

TEST(FiniteDifference, Conv2dAllArguments) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Index stride = 1 + static_cast<Index>(s % 2), pad = static_cast<Index>(s % 2);
    const Index h = stride == 2 ? 7 : 5;
    const Tensor x = random_tensor({1, 2, h, h}, s);
    const Tensor k = random_tensor({3, 2, 3, 3}, s + 1000);
    const Tensor b = random_tensor({3}, s + 2000);
    const Tensor w = random_tensor(conv2d(x, k, b, stride, pad).shape(), s + 3000);
    expect_passes([&](const Tensor& v) { return sum(w * conv2d(v, k, b, stride, pad)); }, x,
                  "conv input", s);
    expect_passes([&](const Tensor& v) { return sum(w * conv2d(x, v, b, stride, pad)); }, k,
                  "conv kernel", s);
    expect_passes([&](const Tensor& v) { return sum(w * conv2d(x, k, v, stride, pad)); }, b,
                  "conv bias", s);
  }
}

TEST(FiniteDifference, ElementwiseAndReductions) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Tensor x = random_away_from_zero({1, 2, 4, 4}, s);
    const Tensor w = random_tensor({1, 2, 4, 4}, s + 500);
    expect_passes([&](const Tensor& v) { return sum(w * relu(v)); }, x, "relu", s);
    expect_passes([&](const Tensor& v) { return sum(w * square(v)); }, x, "square", s);
    expect_passes([&](const Tensor& v) { return mean(w * v); }, x, "mean/mul", s);
    expect_passes([&](const Tensor& v) { return sum(square(v + w) - 0.5 * v); }, x, "add/sub", s);
    expect_passes([&](const Tensor& v) { return sum(v * v); }, x, "self product", s);
  }
}

TEST(FiniteDifference, SoftmaxFamily) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Tensor x = random_tensor({1, 4, 3, 3}, s, -3, 3);
    const Tensor w = random_tensor({1, 4, 3, 3}, s + 500);
    expect_passes([&](const Tensor& v) { return sum(w * log_softmax_channelwise(v)); }, x,
                  "log_softmax", s);
    expect_passes([&](const Tensor& v) { return sum(w * softmax_channelwise(v)); }, x, "softmax",
                  s);
    const Tensor x2 = random_tensor({3, 4}, s + 7, -3, 3);
    const Tensor w2 = random_tensor({3, 4}, s + 8);
    expect_passes([&](const Tensor& v) { return sum(w2 * log_softmax_channelwise(v)); }, x2,
                  "log_softmax rank 2", s);
  }
}

TEST(FiniteDifference, ResamplingAndPooling) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Tensor x = random_tensor({1, 2, 4, 4}, s);
    const Tensor wu = random_tensor({1, 2, 8, 8}, s + 1);
    const Tensor wp = random_tensor({1, 2, 2, 2}, s + 2);
    const Tensor wg = random_tensor({1, 2}, s + 3);
    expect_passes([&](const Tensor& v) { return sum(wu * upsample_nearest(v, 2)); }, x,
                  "upsample", s);
    expect_passes([&](const Tensor& v) { return sum(wp * avg_pool2d(v, 2)); }, x, "avg_pool", s);
    expect_passes([&](const Tensor& v) { return sum(wg * global_average_pool(v)); }, x, "gap", s);
  }
}

TEST(FiniteDifference, ConcatAndLinear) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Tensor a = random_tensor({1, 2, 3, 3}, s);
    const Tensor b = random_tensor({1, 3, 3, 3}, s + 1);
    const Tensor w = random_tensor({1, 5, 3, 3}, s + 2);
    expect_passes(
        [&](const Tensor& v) {
          const Tensor parts[] = {v, b};
          return sum(w * concat_channels(parts));
        },
        a, "concat first", s);
    expect_passes(
        [&](const Tensor& v) {
          const Tensor parts[] = {a, v};
          return sum(w * concat_channels(parts));
        },
        b, "concat second", s);

    const Tensor x = random_tensor({2, 4}, s + 3);
    const Tensor wt = random_tensor({3, 4}, s + 4);
    const Tensor bias = random_tensor({3}, s + 5);
    const Tensor wo = random_tensor({2, 3}, s + 6);
    expect_passes([&](const Tensor& v) { return sum(wo * linear(v, wt, bias)); }, x,
                  "linear input", s);
    expect_passes([&](const Tensor& v) { return sum(wo * linear(x, v, bias)); }, wt,
                  "linear weight", s);
    expect_passes([&](const Tensor& v) { return sum(wo * linear(x, wt, v)); }, bias,
                  "linear bias", s);
  }
}

TEST(FiniteDifference, GradientReversalNegatesAndScales) {
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const Real scale = 0.5 + static_cast<Real>(s % 3);
    Tensor x = random_tensor({2, 3}, s, -1, 1, true);
    const Tensor w = random_tensor({2, 3}, s + 1);
    auto loss = [&] { return sum(w * square(gradient_reversal(x, scale))); };
    x.zero_grad();
    loss().backward();
    // The forward is the identity, so central differences see the plain
    // gradient; the reversal layer must hand back -scale times it.
    const Array undone = -x.grad() / scale;
    x.clear_grad();
    const GradCheckResult r = compare_with_central_differences(loss, x, undone);
    EXPECT_TRUE(r.passed) << "seed " << s << " error " << r.max_relative_error;
  }
}

// --- checker sanity ---------------------------------------------------------------

TEST(GradCheck, SumOfSquaresPassesTightTolerance) {
  GradCheckOptions opt;
  opt.tolerance = 1e-5;
  const GradCheckResult r =
      finite_difference_check([](const Tensor& v) { return sum(square(v)); },
                              random_tensor({10}, 99), opt);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.coordinates_checked, 10);
}

TEST(GradCheck, ConstantFunctionPasses) {
  const Tensor c = Tensor::scalar(4.0);
  const GradCheckResult r = finite_difference_check(
      [&](const Tensor& v) { return c + 0.0 * sum(v); }, random_tensor({5}, 1));
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradCheck, CorruptedGradientFails) {
  const Tensor x = random_tensor({10}, 5, 1, 2, true);
  auto loss = [&] { return sum(square(x)); };
  const Array wrong = 1.1 * (2.0 * x.data());
  const GradCheckResult r = compare_with_central_differences(loss, x, wrong);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 0.05);
}

TEST(GradCheck, StepOutsideRangeIsRejected) {
  GradCheckOptions opt;
  opt.step = 1e-2;
  EXPECT_THROW(finite_difference_check([](const Tensor& v) { return sum(v); },
                                       random_tensor({2}, 1), opt),
               Error);
}

}  // namespace
}  // namespace neos
