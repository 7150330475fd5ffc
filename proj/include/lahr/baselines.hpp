#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lahr/corpus.hpp"
#include "lahr/lookahead.hpp"
#include "lahr/rng.hpp"
#include "lahr/router.hpp"
#include "lahr/tensor.hpp"
#include "lahr/transformer.hpp"
#include "lahr/vocab.hpp"

namespace lahr {

// ---- Embeddings -----------------------------------------------------------

// Deterministic query -> R^{d_e} map with unit-norm output.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // `key` is a query string for model-backed providers and a record id for
  // file-backed ones.
  virtual std::vector<double> embed(const std::string& key) = 0;
  virtual size_t dim() const = 0;
};

// Frozen randomly initialized bidirectional encoder. The embedding is the
// mean of the final hidden states over CLS || query bytes, unit-normalized.
// The weights are never trained; determinism comes from the init seed.
class FrozenMlmEmbedder : public EmbeddingProvider {
 public:
  FrozenMlmEmbedder(TransformerConfig backbone, uint64_t seed,
                    size_t max_query_bytes = 64);

  std::vector<double> embed(const std::string& query) override;
  size_t dim() const override { return backbone_.config().d_model; }

 private:
  Vocabulary vocab_;
  Transformer backbone_;
  size_t max_query_bytes_;
};

// Precomputed embeddings keyed by record id. File format: one record per
// line — the id, then d_e decimal floats, all space-separated. Vectors are
// unit-normalized on load; an unknown id at lookup is a contract error.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::string& path);

  std::vector<double> embed(const std::string& record_id) override;
  size_t dim() const override { return dim_; }
  size_t size() const { return table_.size(); }

 private:
  size_t dim_ = 0;
  std::map<std::string, std::vector<double>> table_;
};

// ---- kNN -------------------------------------------------------------------

struct NeighborIndex {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> embeddings;  // [n][d_e], unit norm
  std::vector<std::vector<double>> scores;      // [n][T]

  size_t size() const { return embeddings.size(); }
  size_t num_models() const { return scores.empty() ? 0 : scores[0].size(); }
  // Equal row counts, consistent dimensions, no duplicate ids.
  void validate() const;
};

// Embeds every example (by query, or by record id when key_by_id is set, for
// file-backed providers) and attaches its normalized scores.
NeighborIndex build_index(EmbeddingProvider& provider,
                          const std::vector<RoutingExample>& examples,
                          bool key_by_id = false);

// Exhaustive scan: the k nearest stored records by cosine distance, ties
// broken toward the lower record index; selects the model with the highest
// mean score over that neighborhood.
RoutingDecision knn_route(const NeighborIndex& index,
                          const std::vector<double>& query_embedding,
                          size_t k);

// ---- k-means ----------------------------------------------------------------

struct ClusterModel {
  std::vector<std::vector<double>> centroids;       // [k][d_e]
  std::vector<std::vector<double>> cluster_scores;  // [k][T] mean member score
  std::vector<int> best_model;                      // [k], 1-based
  std::vector<double> sse_trace;  // SSE after each assignment pass
  size_t iterations = 0;
  size_t reseed_events = 0;

  size_t k() const { return centroids.size(); }
  void validate() const;
};

// Seeded k-means++ initialization followed by Lloyd's iterations until the
// largest centroid movement drops below 1e-6 or 100 iterations pass. A
// cluster left empty by an assignment pass is re-seeded to the point
// farthest from its current centroid (warned and counted). Embeddings must
// be unit-norm, so squared Euclidean distance orders points exactly like
// cosine distance.
ClusterModel kmeans_fit(const std::vector<std::vector<double>>& embeddings,
                        const std::vector<std::vector<double>>& scores,
                        size_t k, uint64_t seed);

// Deterministic core with caller-chosen initial centroids; kmeans_fit is
// k-means++ followed by this.
ClusterModel kmeans_fit_from(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::vector<double>>& scores,
    std::vector<std::vector<double>> initial_centroids);

// Routes to the best model of the nearest centroid; the decision carries the
// cluster's mean member scores.
RoutingDecision kmeans_route(const ClusterModel& model,
                             const std::vector<double>& query_embedding);

// ---- Router adapters ---------------------------------------------------------

class KnnRouter : public Router {
 public:
  KnnRouter(std::shared_ptr<EmbeddingProvider> provider, NeighborIndex index,
            size_t k = 100, bool key_by_id = false);

  RoutingDecision route(const std::string& query) override;
  RoutingDecision route_example(const RoutingExample& example) override;
  size_t num_models() const override { return index_.num_models(); }
  std::string kind() const override { return "knn"; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  NeighborIndex index_;
  size_t k_;
  bool key_by_id_;
};

class KmeansRouter : public Router {
 public:
  KmeansRouter(std::shared_ptr<EmbeddingProvider> provider, ClusterModel model,
               bool key_by_id = false);

  RoutingDecision route(const std::string& query) override;
  RoutingDecision route_example(const RoutingExample& example) override;
  size_t num_models() const override { return model_.cluster_scores[0].size(); }
  std::string kind() const override { return "kmeans"; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  ClusterModel model_;
  bool key_by_id_;
};

// ---- Query-only classifiers ---------------------------------------------------

// Multi-label classifier over the bare query: encoder state (CLS row for the
// bidirectional variant, last-token row for the causal one) -> MLP -> sigmoid
// per-model scores, trained with the same BCE as the response-aware router
// but with no response modeling. The config's lambda must be 0.
class MlcRouter : public TrainableRouter {
 public:
  MlcRouter(LookaheadConfig config, uint64_t init_seed);

  RoutingDecision route(const std::string& query) override;
  size_t num_models() const override { return config_.num_models; }
  std::string kind() const override;

  LossParts example_loss(const RoutingExample& example,
                         const CurriculumState& state) override;
  std::vector<NamedTensor> named_parameters() override;
  std::string config_json() const override;
  std::vector<double> routing_state(const std::string& query) override;

  const LookaheadConfig& config() const { return config_; }

 private:
  Tensor query_state(const std::string& query) const;  // [1, d]
  Tensor scores_from_state(const Tensor& state) const;  // [1, T] sigmoid

  LookaheadConfig config_;
  Vocabulary vocab_;
  Transformer backbone_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

// Distribution predictor over the T models: the same query-only encoder with
// a T-way softmax head, trained with KL(target || prediction) where
// target = softmax(normalized scores / tau). tau must be positive.
class ZooterRouter : public TrainableRouter {
 public:
  ZooterRouter(LookaheadConfig config, double tau, uint64_t init_seed);

  RoutingDecision route(const std::string& query) override;
  size_t num_models() const override { return config_.num_models; }
  std::string kind() const override;

  LossParts example_loss(const RoutingExample& example,
                         const CurriculumState& state) override;
  std::vector<NamedTensor> named_parameters() override;
  std::string config_json() const override;
  std::vector<double> routing_state(const std::string& query) override;

  const LookaheadConfig& config() const { return config_; }
  double tau() const { return tau_; }

 private:
  Tensor query_state(const std::string& query) const;
  Tensor logits_from_state(const Tensor& state) const;  // [1, T]

  LookaheadConfig config_;
  double tau_;
  Vocabulary vocab_;
  Transformer backbone_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

// softmax(normalized / tau) as a plain vector; tau <= 0 is a contract error.
std::vector<double> zooter_target(const std::vector<double>& normalized,
                                  double tau);

// KL(target || prediction) from a constant target distribution and predicted
// log-probabilities [1, T]. Zero target entries contribute zero.
Tensor kl_divergence(const std::vector<double>& target,
                     const Tensor& log_pred);

// ---- Reference methods -----------------------------------------------------------

// Uniform pick among the T models; scores are flat 1/T.
RoutingDecision random_route(size_t num_models, Rng& rng);
// Argmax of ground-truth scores (lowest index on ties).
RoutingDecision oracle_route(const std::vector<double>& scores);
// Argmax of judge scores over the candidate responses.
RoutingDecision reward_select(const std::vector<double>& judge_scores);

class RandomRouter : public Router {
 public:
  RandomRouter(size_t num_models, uint64_t seed)
      : num_models_(num_models), rng_(seed) {}

  RoutingDecision route(const std::string&) override {
    return random_route(num_models_, rng_);
  }
  size_t num_models() const override { return num_models_; }
  std::string kind() const override { return "random"; }

 private:
  size_t num_models_;
  Rng rng_;
};

// Needs ground-truth scores, so only route_example works; route(query) is a
// contract error.
class OracleRouter : public Router {
 public:
  explicit OracleRouter(size_t num_models) : num_models_(num_models) {}

  RoutingDecision route(const std::string& query) override;
  RoutingDecision route_example(const RoutingExample& example) override;
  size_t num_models() const override { return num_models_; }
  std::string kind() const override { return "oracle"; }

 private:
  size_t num_models_;
};

// Picks the response the judge scores highest. The default judge returns the
// record's ground-truth scores, which collapses this to the oracle.
class RewardSelectRouter : public Router {
 public:
  using Judge = std::function<std::vector<double>(const RoutingExample&)>;

  explicit RewardSelectRouter(size_t num_models, Judge judge = nullptr)
      : num_models_(num_models), judge_(std::move(judge)) {}

  RoutingDecision route(const std::string& query) override;
  RoutingDecision route_example(const RoutingExample& example) override;
  size_t num_models() const override { return num_models_; }
  std::string kind() const override { return "reward-select"; }

 private:
  size_t num_models_;
  Judge judge_;
};

}  // namespace lahr
