#include "lahr/grad_check.hpp"

#include <cmath>

#include "lahr/rng.hpp"

namespace lahr {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> params,
                                const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0 && options.epsilon <= 1e-2)) {
    throw ContractError("check_gradients: epsilon must be in (0, 1e-2]");
  }
  if (params.empty()) {
    throw ContractError("check_gradients: no parameters given");
  }
  for (const Tensor& p : params) {
    if (!p.defined() || !p.requires_grad()) {
      throw ContractError(
          "check_gradients: every parameter must be defined with "
          "requires_grad set");
    }
  }

  auto eval = [&]() {
    NoGradGuard no_grad;
    Tensor loss = loss_fn();
    return loss.scalar_value();
  };

  const double l1 = eval();
  const double l2 = eval();
  if (l1 != l2) {
    throw NumericError(
        "check_gradients: loss_fn is not deterministic; two identical "
        "evaluations differ");
  }

  // Analytic pass.
  for (Tensor& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    analytic.push_back(p.has_grad()
                           ? p.grad()
                           : std::vector<double>(p.size(), 0.0));
  }

  // Coordinate selection.
  std::vector<std::pair<size_t, size_t>> coords;
  size_t total = 0;
  for (const Tensor& p : params) total += p.size();
  coords.reserve(total);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (size_t ci = 0; ci < params[pi].size(); ++ci) {
      coords.emplace_back(pi, ci);
    }
  }
  if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
    Rng rng(options.sample_seed);
    rng.shuffle(coords);
    coords.resize(options.max_coordinates);
  }

  GradCheckResult result;
  result.coordinates_checked = coords.size();
  const double eps = options.epsilon;
  for (const auto& [pi, ci] : coords) {
    std::vector<double>& theta = params[pi].mutable_values();
    const double original = theta[ci];
    theta[ci] = original + eps;
    const double plus = eval();
    theta[ci] = original - eps;
    const double minus = eval();
    theta[ci] = original;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[pi][ci] - numeric) /
                       std::max(1.0, std::abs(numeric));
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_param = pi;
      result.worst_coordinate = ci;
    }
  }
  return result;
}

}  // namespace lahr
