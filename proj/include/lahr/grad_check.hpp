#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lahr/tensor.hpp"

namespace lahr {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // When positive, check at most this many coordinates, chosen by a seeded
  // uniform sample over the concatenated parameter space. Zero checks all.
  size_t max_coordinates = 0;
  uint64_t sample_seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  size_t coordinates_checked = 0;
  // Flat coordinate (param index, value index) where the max occurred.
  size_t worst_param = 0;
  size_t worst_coordinate = 0;
};

// Compares reverse-mode gradients of loss_fn with central finite differences.
// loss_fn must rebuild its graph from the current parameter values on every
// call and be deterministic; a bitwise difference between two evaluations is
// rejected before any perturbation. Relative error per coordinate is
// |analytic - numeric| / max(1, |numeric|).
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> params,
                                const GradCheckOptions& options = {});

}  // namespace lahr
