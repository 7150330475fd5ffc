#include "lahr/router.hpp"

#include "lahr/errors.hpp"

namespace lahr {

int argmax_lowest_index(const std::vector<double>& scores) {
  if (scores.empty()) {
    throw ContractError("argmax_lowest_index: empty score vector");
  }
  size_t best = 0;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

RoutingDecision Router::route_example(const RoutingExample& example) {
  return route(example.query);
}

}  // namespace lahr
