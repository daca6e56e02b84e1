// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include "neos/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "neos/error.hpp"

namespace neos {

namespace {

std::vector<Index> pick_coordinates(Index count, const GradCheckOptions& options) {
  std::vector<Index> all(static_cast<std::size_t>(count));
  std::iota(all.begin(), all.end(), Index{0});
  if (!options.max_coordinates || *options.max_coordinates >= count) return all;
  std::mt19937_64 rng(options.seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(*options.max_coordinates));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradCheckResult compare_with_central_differences(const std::function<Tensor()>& loss,
                                                 Tensor param, const Array& analytic,
                                                 const GradCheckOptions& options) {
  if (options.step < 1e-7 || options.step > 1e-3) {
    fail(ErrorKind::kConfig, "finite difference step must lie in [1e-7, 1e-3]");
  }
  if (analytic.size() != param.numel()) {
    fail(ErrorKind::kDimension, "analytic gradient length does not match parameter");
  }
  GradCheckResult result;
  NoGradGuard no_grad;
  Array& data = param.mutable_data();
  for (Index i : pick_coordinates(param.numel(), options)) {
    const Real saved = data[i];
    data[i] = saved + options.step;
    const Real up = loss().item();
    data[i] = saved - options.step;
    const Real down = loss().item();
    data[i] = saved;
    const Real numeric = (up - down) / (2.0 * options.step);
    const Real err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (std::isnan(err) || err > result.max_relative_error || result.worst_coordinate < 0) {
      result.max_relative_error = std::isnan(err) ? INFINITY : err;
      result.worst_coordinate = i;
    }
    ++result.coordinates_checked;
  }
  result.passed = result.max_relative_error < options.tolerance;
  return result;
}

GradCheckResult finite_difference_check_inplace(const std::function<Tensor()>& loss,
                                                Tensor param,
                                                const GradCheckOptions& options) {
  const bool previous = param.requires_grad();
  param.set_requires_grad(true);
  param.clear_grad();
  Tensor value = loss();
  value.backward();
  Array analytic = param.has_grad() ? param.grad() : Array::Zero(param.numel());
  param.clear_grad();
  param.set_requires_grad(previous);
  return compare_with_central_differences(loss, param, analytic, options);
}

GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                        const Tensor& point,
                                        const GradCheckOptions& options) {
  Tensor x = point.detach();
  return finite_difference_check_inplace([&] { return f(x); }, x, options);
}

}  // namespace neos
