#include "lahr/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lahr/log.hpp"
#include "lahr/rng.hpp"

namespace lahr {

double validation_accuracy(Router& router,
                           const std::vector<RoutingExample>& examples,
                           size_t limit) {
  if (examples.empty()) {
    throw ContractError("validation_accuracy: no examples");
  }
  const size_t n =
      limit == 0 ? examples.size() : std::min(limit, examples.size());
  double correct = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const RoutingExample& ex = examples[i];
    if (ex.labels.size() != router.num_models()) {
      throw ContractError("validation example '" + ex.id +
                          "' has no labels");
    }
    const RoutingDecision d = router.route_example(ex);
    correct += ex.labels[static_cast<size_t>(d.selected - 1)];
  }
  return correct / static_cast<double>(n);
}

namespace {

std::string format_log_line(uint64_t step, double train_loss,
                            double route_loss, double resp_loss,
                            double val_acc, double lr) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu\t%.6f\t%.6f\t%.6f\t%.6f\t%.8f",
                static_cast<unsigned long long>(step), train_loss, route_loss,
                resp_loss, val_acc, lr);
  return buf;
}

std::vector<std::vector<double>> copy_values(std::vector<NamedTensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (NamedTensor& np : params) out.push_back(np.tensor.values());
  return out;
}

void restore_values(std::vector<NamedTensor> params,
                    const std::vector<std::vector<double>>& values) {
  for (size_t i = 0; i < params.size(); ++i) {
    params[i].tensor.mutable_values() = values[i];
  }
}

}  // namespace

TrainResult train_router(TrainableRouter& router,
                         const std::vector<RoutingExample>& train_set,
                         const std::vector<RoutingExample>& validation_set,
                         const TrainConfig& config) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (validation_set.empty()) {
    throw ContractError("train: empty validation set");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ContractError("train: epochs and batch_size must be >= 1");
  }
  for (const RoutingExample& ex : train_set) {
    if (ex.num_models() != router.num_models()) {
      throw ContractError("train: record '" + ex.id + "' has " +
                          std::to_string(ex.num_models()) +
                          " models but the router expects " +
                          std::to_string(router.num_models()));
    }
    if (ex.labels.size() != ex.num_models()) {
      throw ContractError("train: record '" + ex.id + "' has no labels");
    }
  }

  const size_t n = train_set.size();
  const size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const uint64_t total_steps =
      static_cast<uint64_t>(config.epochs) * batches_per_epoch;

  std::vector<Tensor> param_tensors;
  for (NamedTensor& np : router.named_parameters()) {
    param_tensors.push_back(np.tensor);
  }
  AdamW optimizer(param_tensors, config.optim);
  const LrSchedule schedule =
      make_warmup_cosine(config.optim.lr, total_steps, config.min_lr);

  Rng order_rng(config.seed);
  Rng mask_rng(config.seed ^ 0x6d61736bULL);

  TrainResult result;
  result.total_steps = total_steps;
  bool have_best = false;
  std::vector<std::vector<double>> best_f64;

  uint64_t step = 0;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    order_rng.shuffle(order);
    for (size_t b = 0; b < batches_per_epoch; ++b) {
      const size_t begin = b * config.batch_size;
      const size_t end = std::min(begin + config.batch_size, n);
      const double u = static_cast<double>(step) /
                       static_cast<double>(total_steps);
      Tensor batch_joint = Tensor::scalar(0.0);
      double route_sum = 0.0;
      double resp_sum = 0.0;
      for (size_t i = begin; i < end; ++i) {
        CurriculumState state;
        state.u = u;
        state.mask_seed = mask_rng.next_u64();
        LossParts parts = router.example_loss(train_set[order[i]], state);
        batch_joint = add(batch_joint, parts.joint);
        route_sum += parts.route.scalar_value();
        resp_sum += parts.resp.scalar_value();
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      Tensor batch_loss = scale(batch_joint, inv);
      const double loss_value = batch_loss.scalar_value();
      if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged at step " +
                           std::to_string(step + 1) +
                           ": loss is not finite");
      }
      optimizer.zero_grad();
      backward(batch_loss);
      optimizer.set_lr(lr_at(schedule, step + 1));
      optimizer.step();
      ++step;
      result.final_train_loss = loss_value;

      if (step % config.validate_every == 0 || step == total_steps) {
        const double acc = validation_accuracy(
            router, validation_set, config.max_validation_examples);
        result.log_lines.push_back(
            format_log_line(step, loss_value, route_sum * inv, resp_sum * inv,
                            acc, optimizer.lr()));
        if (!have_best || acc > result.best_validation_accuracy) {
          have_best = true;
          result.best_validation_accuracy = acc;
          result.best_step = step;
          result.checkpoint = snapshot_router(router, config.seed, step, acc);
          best_f64 = copy_values(router.named_parameters());
        }
      }
    }
  }

  // 64->32-bit narrowing safety check: the stored checkpoint must route the
  // validation set exactly like the full-precision weights it came from.
  restore_values(router.named_parameters(), best_f64);
  std::vector<int> decisions_f64;
  const size_t check_n = config.max_validation_examples == 0
                             ? validation_set.size()
                             : std::min(config.max_validation_examples,
                                        validation_set.size());
  decisions_f64.reserve(check_n);
  for (size_t i = 0; i < check_n; ++i) {
    decisions_f64.push_back(router.route_example(validation_set[i]).selected);
  }
  restore_router(router, result.checkpoint);
  size_t flips = 0;
  for (size_t i = 0; i < check_n; ++i) {
    if (router.route_example(validation_set[i]).selected != decisions_f64[i]) {
      ++flips;
    }
  }
  if (flips > 0) {
    logging::warn("checkpoint narrowing to 32-bit flips " +
                  std::to_string(flips) + "/" + std::to_string(check_n) +
                  " validation routing decisions");
  }

  if (!config.log_path.empty()) {
    std::ofstream out(config.log_path, std::ios::trunc);
    if (!out) {
      throw IoError("cannot write training log '" + config.log_path + "'");
    }
    for (const std::string& line : result.log_lines) out << line << '\n';
  }
  return result;
}

}  // namespace lahr
