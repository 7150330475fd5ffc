#pragma once

#include <string>
#include <vector>

#include "lahr/corpus.hpp"
#include "lahr/lookahead.hpp"
#include "lahr/router.hpp"
#include "lahr/tensor.hpp"
#include "lahr/transformer.hpp"

namespace lahr {

// ---- Score metrics -----------------------------------------------------------

// Mean ground-truth score of each example's selected model.
double original_score(Router& router,
                      const std::vector<RoutingExample>& examples);

// Analytic expectation of uniform routing: mean over examples of the mean
// per-model score. No sampling, so the reference carries no seed variance.
double random_reference(const std::vector<RoutingExample>& examples);

// Mean per-example best score; the upper reference.
double oracle_reference(const std::vector<RoutingExample>& examples);

// (mu_o - random) / (oracle - random) * 100. The references must be distinct
// with oracle above random, otherwise the metric is undefined.
double normalized_score(double mu_o, double mu_random, double mu_oracle);

// Percentage of examples routed to each model; sums to 100.
std::vector<double> routing_proportions(
    Router& router, const std::vector<RoutingExample>& examples);

// ---- Win / tie / loss ---------------------------------------------------------

struct WinTieLossRow {
  size_t num_correct = 0;  // examples whose label row has this many 1s
  size_t count = 0;
  double win_pct = 0.0;   // A picked a correct model, B did not
  double tie_pct = 0.0;
  double loss_pct = 0.0;  // B picked a correct model, A did not
};

// Groups examples by their number of correct candidate models and compares
// the two routers inside each group. Rows are sorted by num_correct and
// cover only groups that occur.
std::vector<WinTieLossRow> win_tie_loss(
    Router& router_a, Router& router_b,
    const std::vector<RoutingExample>& examples);

// ---- Evaluation report ---------------------------------------------------------

struct BenchmarkResult {
  std::string name;
  size_t query_count = 0;
  double mu_o = 0.0;
  double mu_random = 0.0;
  double mu_oracle = 0.0;
  double mu_n = 0.0;
  std::vector<double> proportions;
};

struct EvalReport {
  std::string router_kind;
  std::vector<BenchmarkResult> benchmarks;  // one per tag, sorted by name
  double average_mu_n = 0.0;                // mean of per-benchmark mu_n
  // Optional pairwise comparison against a second router.
  std::string comparison_kind;
  std::vector<WinTieLossRow> comparison;

  // Line-delimited JSON, one object per benchmark (and per comparison row).
  std::string to_jsonl() const;
  // Tab-separated summary: benchmark, queries, mu_o, mu_n; average last.
  std::string to_tsv() const;
};

// Evaluates the router per tag group. Examples must carry normalized scores
// and labels sized to the router.
EvalReport evaluate_router(Router& router,
                           const std::vector<RoutingExample>& examples);

// ---- MINE mutual-information estimator -------------------------------------------

struct MineConfig {
  size_t layers = 4;      // fully connected layers in the statistic network
  size_t hidden = 1024;   // hidden units per layer
  size_t epochs = 100;
  size_t batch = 512;
  double lr = 1e-4;
  double warmup_fraction = 0.1;  // linear warmup, then linear decay
  size_t repetitions = 1;        // independent seeds
  uint64_t seed = 1;
  size_t read_out_epochs = 10;   // estimate = mean of the last such epochs

  void validate() const;
};

struct MineResult {
  std::vector<double> estimates;  // one per repetition, clamped at 0
  double median = 0.0;
  double q1 = 0.0;  // 25th percentile
  double q3 = 0.0;  // 75th percentile
};

// Lower-bound mutual-information estimate between paired samples. The
// statistic network maximizes mean_joint[T] - ln mean_marginal[exp T], with
// marginal pairs made by shuffling y inside each batch.
MineResult mine_estimate(const std::vector<std::vector<double>>& x,
                         const std::vector<std::vector<double>>& y,
                         const MineConfig& config);

// Median and quartiles with linear interpolation between order statistics.
double quantile(std::vector<double> values, double p);

// ---- Mutual-information probe -----------------------------------------------------

// Response-conditioned reference classifier: the bidirectional backbone read
// over CLS || query || actual response blocks (no masking), pooled and
// mapped to per-model sigmoid scores with BCE training. Routing a bare query
// is a contract error; whole records carry the responses it needs.
class OracleResponseClassifier : public TrainableRouter {
 public:
  OracleResponseClassifier(LookaheadConfig config, uint64_t init_seed);

  RoutingDecision route(const std::string& query) override;
  RoutingDecision route_example(const RoutingExample& example) override;
  size_t num_models() const override { return config_.num_models; }
  std::string kind() const override { return "oracle-classifier"; }

  LossParts example_loss(const RoutingExample& example,
                         const CurriculumState& state) override;
  std::vector<NamedTensor> named_parameters() override;
  std::string config_json() const override;
  // Bare queries carry no responses; use state_from_example.
  std::vector<double> routing_state(const std::string& query) override;
  std::vector<double> state_from_example(const RoutingExample& example);

  const LookaheadConfig& config() const { return config_; }

 private:
  Tensor scores_from_example(const RoutingExample& example,
                             Tensor* pooled_out) const;

  LookaheadConfig config_;
  Vocabulary vocab_;
  Transformer backbone_;
  AttentionPool pool_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

struct MiProbeResult {
  MineResult with_rm;     // MI(router_with_rm state, reference state)
  MineResult without_rm;  // MI(router_without_rm state, reference state)
};

// Extracts each router's routing-time state and the reference classifier's
// response-conditioned state on the same examples, then estimates the two
// mutual informations. All state extracts must be dimensionally consistent.
MiProbeResult mi_probe(TrainableRouter& with_rm, TrainableRouter& without_rm,
                       OracleResponseClassifier& reference,
                       const std::vector<RoutingExample>& examples,
                       const MineConfig& config);

}  // namespace lahr
