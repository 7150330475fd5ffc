#pragma once

#include <string>
#include <vector>

#include "lahr/corpus.hpp"

namespace lahr {

// Outcome of routing one query: per-model scores plus the selected model
// (1-based; exact ties go to the lowest index).
struct RoutingDecision {
  std::vector<double> scores;
  int selected = 0;
  double router_latency_ms = 0.0;
};

// 1-based argmax with lowest-index tie-break. Throws ContractError on empty.
int argmax_lowest_index(const std::vector<double>& scores);

// Common interface every routing method implements, so the evaluation
// harness and the gateway can swap methods freely.
class Router {
 public:
  virtual ~Router() = default;

  virtual RoutingDecision route(const std::string& query) = 0;

  // Reference methods (oracle, reward-select) need the record's scores; the
  // default just routes on the query text.
  virtual RoutingDecision route_example(const RoutingExample& example);

  virtual size_t num_models() const = 0;
  virtual std::string kind() const = 0;
};

}  // namespace lahr
