#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lahr/lookahead.hpp"
#include "lahr/optim.hpp"

namespace lahr {

struct TrainConfig {
  size_t epochs = 4;     // MLM default; CLM runs use 2
  size_t batch_size = 16;
  AdamWConfig optim;     // lr 5e-5 etc.
  double min_lr = 0.0;
  size_t validate_every = 100;
  size_t max_validation_examples = 0;  // 0 = use the whole validation set
  uint64_t seed = 1;
  std::string log_path;  // optional: TSV training log written here
};

struct TrainResult {
  CheckpointData checkpoint;  // best-by-validation snapshot, 32-bit weights
  double best_validation_accuracy = 0.0;
  uint64_t best_step = 0;
  uint64_t total_steps = 0;
  double final_train_loss = 0.0;
  // One line per validation step: step, train loss, route loss, resp loss,
  // validation accuracy, lr — tab-separated.
  std::vector<std::string> log_lines;
};

// Mean label value of the selected model over the given examples (top-1
// routing accuracy against binary labels).
double validation_accuracy(Router& router,
                           const std::vector<RoutingExample>& examples,
                           size_t limit = 0);

// AdamW + warmup/cosine schedule over shuffled batches; validates every
// `validate_every` steps (and at the end), keeps the checkpoint with the
// highest validation accuracy, and leaves the router restored to it. Aborts
// with NumericError when the loss stops being finite.
TrainResult train_router(TrainableRouter& router,
                         const std::vector<RoutingExample>& train_set,
                         const std::vector<RoutingExample>& validation_set,
                         const TrainConfig& config);

}  // namespace lahr
