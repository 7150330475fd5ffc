#include "lahr/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <utility>

#include "json.hpp"
#include "lahr/log.hpp"
#include "lahr/optim.hpp"
#include "lahr/rng.hpp"

namespace lahr {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

void require_scores(const RoutingExample& ex) {
  if (ex.normalized.empty()) {
    throw ContractError("record '" + ex.id + "' carries no per-model scores");
  }
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Score metrics

double original_score(Router& router,
                      const std::vector<RoutingExample>& examples) {
  if (examples.empty()) throw ContractError("original_score: no examples");
  double total = 0.0;
  for (const RoutingExample& ex : examples) {
    require_scores(ex);
    const RoutingDecision d = router.route_example(ex);
    const size_t pick = static_cast<size_t>(d.selected - 1);
    if (pick >= ex.normalized.size()) {
      throw ContractError("record '" + ex.id + "' has no score for model " +
                          std::to_string(d.selected));
    }
    total += ex.normalized[pick];
  }
  return total / static_cast<double>(examples.size());
}

double random_reference(const std::vector<RoutingExample>& examples) {
  if (examples.empty()) throw ContractError("random_reference: no examples");
  double total = 0.0;
  for (const RoutingExample& ex : examples) {
    require_scores(ex);
    double row = 0.0;
    for (double s : ex.normalized) row += s;
    total += row / static_cast<double>(ex.normalized.size());
  }
  return total / static_cast<double>(examples.size());
}

double oracle_reference(const std::vector<RoutingExample>& examples) {
  if (examples.empty()) throw ContractError("oracle_reference: no examples");
  double total = 0.0;
  for (const RoutingExample& ex : examples) {
    require_scores(ex);
    total += *std::max_element(ex.normalized.begin(), ex.normalized.end());
  }
  return total / static_cast<double>(examples.size());
}

double normalized_score(double mu_o, double mu_random, double mu_oracle) {
  if (!(mu_oracle > mu_random)) {
    throw NumericError(
        "normalized score undefined: oracle reference (" +
        format_double("%.6f", mu_oracle) + ") does not exceed the random "
        "reference (" + format_double("%.6f", mu_random) + ")");
  }
  return (mu_o - mu_random) / (mu_oracle - mu_random) * 100.0;
}

std::vector<double> routing_proportions(
    Router& router, const std::vector<RoutingExample>& examples) {
  if (examples.empty()) {
    throw ContractError("routing_proportions: no examples");
  }
  std::vector<double> counts(router.num_models(), 0.0);
  for (const RoutingExample& ex : examples) {
    const RoutingDecision d = router.route_example(ex);
    counts[static_cast<size_t>(d.selected - 1)] += 1.0;
  }
  for (double& c : counts) {
    c = c / static_cast<double>(examples.size()) * 100.0;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Win / tie / loss

std::vector<WinTieLossRow> win_tie_loss(
    Router& router_a, Router& router_b,
    const std::vector<RoutingExample>& examples) {
  if (examples.empty()) throw ContractError("win_tie_loss: no examples");
  if (router_a.num_models() != router_b.num_models()) {
    throw ContractError("win_tie_loss: routers disagree on the model count");
  }
  struct Tally {
    size_t count = 0, win = 0, tie = 0, loss = 0;
  };
  std::map<size_t, Tally> groups;
  for (const RoutingExample& ex : examples) {
    if (ex.labels.size() != router_a.num_models()) {
      throw ContractError("record '" + ex.id +
                          "' lacks correctness labels for every model");
    }
    size_t num_correct = 0;
    for (double l : ex.labels) {
      if (l != 0.0 && l != 1.0) {
        throw ContractError("record '" + ex.id +
                            "' has a non-binary correctness label");
      }
      if (l == 1.0) ++num_correct;
    }
    const bool a_correct =
        ex.labels[static_cast<size_t>(router_a.route_example(ex).selected - 1)] ==
        1.0;
    const bool b_correct =
        ex.labels[static_cast<size_t>(router_b.route_example(ex).selected - 1)] ==
        1.0;
    Tally& tally = groups[num_correct];
    ++tally.count;
    if (a_correct && !b_correct) {
      ++tally.win;
    } else if (b_correct && !a_correct) {
      ++tally.loss;
    } else {
      ++tally.tie;
    }
  }
  std::vector<WinTieLossRow> rows;
  for (const auto& [num_correct, tally] : groups) {
    WinTieLossRow row;
    row.num_correct = num_correct;
    row.count = tally.count;
    const double n = static_cast<double>(tally.count);
    row.win_pct = static_cast<double>(tally.win) / n * 100.0;
    row.tie_pct = static_cast<double>(tally.tie) / n * 100.0;
    row.loss_pct = static_cast<double>(tally.loss) / n * 100.0;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluation report

EvalReport evaluate_router(Router& router,
                           const std::vector<RoutingExample>& examples) {
  if (examples.empty()) throw ContractError("evaluate_router: no examples");
  std::map<std::string, std::vector<RoutingExample>> by_tag;
  for (const RoutingExample& ex : examples) {
    by_tag[ex.tag].push_back(ex);
  }
  EvalReport report;
  report.router_kind = router.kind();
  double mu_n_sum = 0.0;
  for (const auto& [tag, group] : by_tag) {
    BenchmarkResult result;
    result.name = tag;
    result.query_count = group.size();
    result.mu_o = original_score(router, group);
    result.mu_random = random_reference(group);
    result.mu_oracle = oracle_reference(group);
    result.mu_n =
        normalized_score(result.mu_o, result.mu_random, result.mu_oracle);
    result.proportions = routing_proportions(router, group);
    mu_n_sum += result.mu_n;
    report.benchmarks.push_back(std::move(result));
  }
  report.average_mu_n = mu_n_sum / static_cast<double>(report.benchmarks.size());
  return report;
}

std::string EvalReport::to_jsonl() const {
  std::string out;
  for (const BenchmarkResult& b : benchmarks) {
    nlohmann::ordered_json j;
    j["router"] = router_kind;
    j["benchmark"] = b.name;
    j["queries"] = b.query_count;
    j["mu_o"] = b.mu_o;
    j["mu_random"] = b.mu_random;
    j["mu_oracle"] = b.mu_oracle;
    j["mu_n"] = b.mu_n;
    j["proportions"] = b.proportions;
    out += j.dump();
    out += '\n';
  }
  {
    nlohmann::ordered_json j;
    j["router"] = router_kind;
    j["benchmark"] = "average";
    j["mu_n"] = average_mu_n;
    out += j.dump();
    out += '\n';
  }
  for (const WinTieLossRow& row : comparison) {
    nlohmann::ordered_json j;
    j["router"] = router_kind;
    j["versus"] = comparison_kind;
    j["num_correct"] = row.num_correct;
    j["count"] = row.count;
    j["win"] = row.win_pct;
    j["tie"] = row.tie_pct;
    j["loss"] = row.loss_pct;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string EvalReport::to_tsv() const {
  std::string out = "benchmark\tqueries\tmu_o\tmu_n\n";
  for (const BenchmarkResult& b : benchmarks) {
    out += b.name + "\t" + std::to_string(b.query_count) + "\t" +
           format_double("%.4f", b.mu_o) + "\t" +
           format_double("%.2f", b.mu_n) + "\n";
  }
  out += "average\t-\t-\t" + format_double("%.2f", average_mu_n) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// MINE

void MineConfig::validate() const {
  if (layers < 2) {
    throw ContractError("MineConfig: the statistic network needs at least "
                        "an input and an output layer");
  }
  if (hidden == 0 || epochs == 0 || batch == 0 || repetitions == 0 ||
      read_out_epochs == 0) {
    throw ContractError("MineConfig: sizes must be positive");
  }
  if (!(lr > 0.0)) throw ContractError("MineConfig: lr must be positive");
  if (!(warmup_fraction >= 0.0) || warmup_fraction >= 1.0) {
    throw ContractError("MineConfig: warmup_fraction must lie in [0, 1)");
  }
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ContractError("quantile: p must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

namespace {

struct StatisticNetwork {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  StatisticNetwork(size_t input_dim, const MineConfig& config, Rng& rng) {
    std::vector<size_t> dims;
    dims.push_back(input_dim);
    for (size_t i = 0; i + 1 < config.layers; ++i) dims.push_back(config.hidden);
    dims.push_back(1);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
      const size_t fan_in = dims[i];
      const size_t fan_out = dims[i + 1];
      const bool last = i + 2 == dims.size();
      // He initialization under ReLU; small final layer keeps the first
      // estimates near zero.
      const double stddev =
          last ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
      std::vector<double> w(fan_in * fan_out);
      for (double& v : w) v = rng.normal(0.0, stddev);
      weights.push_back(Tensor::from_values({fan_in, fan_out}, std::move(w),
                                            true));
      biases.push_back(Tensor::zeros({1, fan_out}, true));
    }
  }

  Tensor forward(const Tensor& input) const {
    Tensor h = input;
    for (size_t i = 0; i < weights.size(); ++i) {
      h = add(matmul(h, weights[i]), biases[i]);
      if (i + 1 < weights.size()) h = relu(h);
    }
    return h;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> params;
    for (Tensor& w : weights) params.push_back(w);
    for (Tensor& b : biases) params.push_back(b);
    return params;
  }
};

}  // namespace

MineResult mine_estimate(const std::vector<std::vector<double>>& x,
                         const std::vector<std::vector<double>>& y,
                         const MineConfig& config) {
  config.validate();
  const size_t n = x.size();
  if (n == 0 || y.size() != n) {
    throw ContractError("mine_estimate: x and y must pair the same samples");
  }
  if (n < config.batch) {
    throw ContractError("mine_estimate: " + std::to_string(n) +
                        " samples cannot fill a batch of " +
                        std::to_string(config.batch));
  }
  const size_t p = x[0].size();
  const size_t q = y[0].size();
  if (p == 0 || q == 0) {
    throw ContractError("mine_estimate: empty sample vectors");
  }
  for (size_t i = 0; i < n; ++i) {
    if (x[i].size() != p || y[i].size() != q) {
      throw ContractError("mine_estimate: dimensionality mismatch at sample " +
                          std::to_string(i));
    }
    for (double v : x[i]) {
      if (!std::isfinite(v)) {
        throw ContractError("mine_estimate: non-finite sample value");
      }
    }
    for (double v : y[i]) {
      if (!std::isfinite(v)) {
        throw ContractError("mine_estimate: non-finite sample value");
      }
    }
  }

  const size_t steps_per_epoch = n / config.batch;
  const size_t total_steps = config.epochs * steps_per_epoch;
  LrSchedule schedule;
  schedule.base_lr = config.lr;
  schedule.total_steps = total_steps;
  schedule.warmup_steps = static_cast<size_t>(
      config.warmup_fraction * static_cast<double>(total_steps));
  schedule.min_lr = 0.0;
  schedule.decay = LrSchedule::Decay::linear;

  MineResult result;
  for (size_t rep = 0; rep < config.repetitions; ++rep) {
    Rng rng(config.seed + rep);
    StatisticNetwork net(p + q, config, rng);
    AdamWConfig opt_cfg;
    opt_cfg.lr = config.lr;
    opt_cfg.weight_decay = 0.0;
    AdamW optimizer(net.parameters(), opt_cfg);

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> epoch_values(config.epochs, 0.0);
    uint64_t step = 0;
    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_sum = 0.0;
      for (size_t b = 0; b < steps_per_epoch; ++b) {
        const size_t begin = b * config.batch;
        std::vector<size_t> marginal(config.batch);
        for (size_t i = 0; i < config.batch; ++i) marginal[i] = i;
        rng.shuffle(marginal);

        std::vector<double> joint_rows, marginal_rows;
        joint_rows.reserve(config.batch * (p + q));
        marginal_rows.reserve(config.batch * (p + q));
        for (size_t i = 0; i < config.batch; ++i) {
          const std::vector<double>& xi = x[order[begin + i]];
          const std::vector<double>& yi = y[order[begin + i]];
          const std::vector<double>& ym = y[order[begin + marginal[i]]];
          joint_rows.insert(joint_rows.end(), xi.begin(), xi.end());
          joint_rows.insert(joint_rows.end(), yi.begin(), yi.end());
          marginal_rows.insert(marginal_rows.end(), xi.begin(), xi.end());
          marginal_rows.insert(marginal_rows.end(), ym.begin(), ym.end());
        }
        const Tensor joint_in =
            Tensor::from_values({config.batch, p + q}, std::move(joint_rows));
        const Tensor marginal_in = Tensor::from_values(
            {config.batch, p + q}, std::move(marginal_rows));

        const Tensor objective =
            sub(reduce_mean(net.forward(joint_in)),
                log_mean_exp(net.forward(marginal_in)));
        const double value = objective.scalar_value();
        if (!std::isfinite(value)) {
          throw NumericError("mine_estimate: objective diverged at step " +
                             std::to_string(step + 1));
        }
        epoch_sum += value;
        optimizer.zero_grad();
        backward(neg(objective));
        optimizer.set_lr(lr_at(schedule, step + 1));
        optimizer.step();
        ++step;
      }
      epoch_values[epoch] = epoch_sum / static_cast<double>(steps_per_epoch);
    }

    const size_t read = std::min<size_t>(config.read_out_epochs,
                                         config.epochs);
    double tail = 0.0;
    for (size_t e = config.epochs - read; e < config.epochs; ++e) {
      tail += epoch_values[e];
    }
    result.estimates.push_back(std::max(0.0, tail / static_cast<double>(read)));
  }

  result.median = quantile(result.estimates, 0.5);
  result.q1 = quantile(result.estimates, 0.25);
  result.q3 = quantile(result.estimates, 0.75);
  return result;
}

// ---------------------------------------------------------------------------
// Oracle-response classifier

OracleResponseClassifier::OracleResponseClassifier(LookaheadConfig config,
                                                   uint64_t init_seed)
    : config_(std::move(config)),
      vocab_(config_.num_models),
      backbone_([&] {
        config_.validate();
        if (config_.variant != Variant::mlm) {
          throw ContractError(
              "the response-conditioned classifier uses the bidirectional "
              "variant");
        }
        if (config_.lambda != 0.0) {
          throw ContractError(
              "the response-conditioned classifier has no reconstruction "
              "term; lambda must be 0");
        }
        TransformerConfig bc = config_.backbone;
        bc.vocab_size = Vocabulary(config_.num_models).size();
        bc.directionality = TransformerConfig::Directionality::bidirectional;
        bc.validate();
        Rng rng(init_seed);
        return Transformer(bc, rng);
      }()),
      pool_([&] {
        Rng rng(init_seed ^ 0x706f6f6cULL);
        return AttentionPool(config_.backbone.d_model, rng);
      }()) {
  config_.backbone = backbone_.config();
  const size_t d = config_.backbone.d_model;
  const size_t T = config_.num_models;
  Rng rng(init_seed ^ 0x6d6c7068ULL);
  std::vector<double> w1(d * d);
  for (double& v : w1) v = rng.normal(0.0, 0.02);
  mlp_w1_ = Tensor::from_values({d, d}, std::move(w1), true);
  mlp_b1_ = Tensor::zeros({1, d}, true);
  // Final layer starts at zero so the untrained classifier scores 0.5.
  mlp_w2_ = Tensor::zeros({d, T}, true);
  mlp_b2_ = Tensor::zeros({1, T}, true);
}

Tensor OracleResponseClassifier::scores_from_example(
    const RoutingExample& example, Tensor* pooled_out) const {
  if (example.responses.size() != config_.num_models) {
    throw ContractError("record '" + example.id + "' carries " +
                        std::to_string(example.responses.size()) +
                        " responses for a " +
                        std::to_string(config_.num_models) +
                        "-model classifier");
  }
  // rho = 0 leaves every block holding its actual response bytes.
  const MlmInput input = mlm_build_input(
      vocab_, example.query, example.responses, config_.m, /*rho=*/0.0,
      config_.masking, /*seed=*/0, config_.backbone.max_seq,
      config_.max_query_bytes);
  const ForwardActivations act = mlm_forward(backbone_, vocab_.cls_id(),
                                             input.tokens, input.is_padding,
                                             false);
  const std::vector<size_t> key_rows = non_pad_block_rows(input, config_.m);
  if (key_rows.empty()) {
    throw ContractError("record '" + example.id +
                        "' has no response content to classify");
  }
  const Tensor keys = gather_rows(act.hidden, key_rows);
  const Tensor cls_row = gather_rows(act.hidden, {0});
  const Tensor pooled = pool_.pool(cls_row, keys);
  if (pooled_out != nullptr) *pooled_out = pooled;
  const Tensor h = gelu(add(matmul(pooled, mlp_w1_), mlp_b1_));
  return sigmoid(add(matmul(h, mlp_w2_), mlp_b2_));
}

RoutingDecision OracleResponseClassifier::route(const std::string&) {
  throw ContractError(
      "the response-conditioned classifier reads candidate responses; route "
      "whole records");
}

RoutingDecision OracleResponseClassifier::route_example(
    const RoutingExample& example) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const Tensor scores = scores_from_example(example, nullptr);
  RoutingDecision decision;
  decision.scores = scores.values();
  decision.selected = argmax_lowest_index(decision.scores);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

LossParts OracleResponseClassifier::example_loss(const RoutingExample& example,
                                                 const CurriculumState&) {
  if (example.labels.size() != config_.num_models) {
    throw ContractError("record '" + example.id + "' carries " +
                        std::to_string(example.labels.size()) +
                        " labels for a " + std::to_string(config_.num_models) +
                        "-model classifier");
  }
  LossParts parts;
  parts.route =
      routing_loss_bce(scores_from_example(example, nullptr), example.labels);
  parts.resp = Tensor::scalar(0.0);
  parts.joint = parts.route;
  return parts;
}

std::vector<NamedTensor> OracleResponseClassifier::named_parameters() {
  std::vector<NamedTensor> params = backbone_.named_parameters();
  for (NamedTensor& np : pool_.named_parameters()) params.push_back(np);
  params.push_back({"mlp.w1", mlp_w1_});
  params.push_back({"mlp.b1", mlp_b1_});
  params.push_back({"mlp.w2", mlp_w2_});
  params.push_back({"mlp.b2", mlp_b2_});
  return params;
}

std::string OracleResponseClassifier::config_json() const {
  return config_.to_json();
}

std::vector<double> OracleResponseClassifier::routing_state(
    const std::string&) {
  throw ContractError(
      "the response-conditioned classifier extracts states from whole "
      "records");
}

std::vector<double> OracleResponseClassifier::state_from_example(
    const RoutingExample& example) {
  NoGradGuard no_grad;
  Tensor pooled;
  scores_from_example(example, &pooled);
  return pooled.values();
}

// ---------------------------------------------------------------------------
// MI probe

MiProbeResult mi_probe(TrainableRouter& with_rm, TrainableRouter& without_rm,
                       OracleResponseClassifier& reference,
                       const std::vector<RoutingExample>& examples,
                       const MineConfig& config) {
  if (examples.empty()) throw ContractError("mi_probe: no examples");
  if (with_rm.num_models() != reference.num_models() ||
      without_rm.num_models() != reference.num_models()) {
    throw ContractError("mi_probe: the three models route different model "
                        "counts; they must share one corpus");
  }
  std::vector<std::vector<double>> with_states, without_states, ref_states;
  with_states.reserve(examples.size());
  without_states.reserve(examples.size());
  ref_states.reserve(examples.size());
  for (const RoutingExample& ex : examples) {
    with_states.push_back(with_rm.routing_state(ex.query));
    without_states.push_back(without_rm.routing_state(ex.query));
    ref_states.push_back(reference.state_from_example(ex));
  }
  MiProbeResult result;
  result.with_rm = mine_estimate(with_states, ref_states, config);
  result.without_rm = mine_estimate(without_states, ref_states, config);
  return result;
}

}  // namespace lahr
