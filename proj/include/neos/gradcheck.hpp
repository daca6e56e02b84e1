// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "neos/tensor.hpp"

namespace neos {

struct GradCheckResult {
  bool passed = false;
  Real max_relative_error = 0.0;
  Index worst_coordinate = -1;
  Index coordinates_checked = 0;
};

struct GradCheckOptions {
  Real step = 1e-5;
  Real tolerance = 1e-4;
  /// When set, only this many coordinates (sampled with `seed`) are compared.
  std::optional<Index> max_coordinates;
  std::uint64_t seed = 0;
};

/// Compares the reverse-mode gradient of scalar `f` at `point` against
/// central differences (f(x+h e_i) - f(x-h e_i)) / 2h. The relative error of a
/// coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                        const Tensor& point,
                                        const GradCheckOptions& options = {});

/// Same comparison for a leaf `param` captured by `loss`, perturbed in place.
/// The leaf's data is restored before returning.
GradCheckResult finite_difference_check_inplace(const std::function<Tensor()>& loss,
                                                Tensor param,
                                                const GradCheckOptions& options = {});

/// Compares an externally supplied analytic gradient, used to confirm the
/// checker rejects wrong gradients.
GradCheckResult compare_with_central_differences(const std::function<Tensor()>& loss,
                                                 Tensor param, const Array& analytic,
                                                 const GradCheckOptions& options = {});

}  // namespace neos
