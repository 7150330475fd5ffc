#include "lahr/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "lahr/log.hpp"
#include "lahr/masks.hpp"

namespace lahr {

namespace {

Tensor init_matrix(size_t rows, size_t cols, Rng& rng, double stddev = 0.02) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from_values({rows, cols}, std::move(values), true);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

void unit_normalize(std::vector<double>& v, const std::string& what) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 1e-12)) {
    throw NumericError(what + ": cannot unit-normalize a zero-norm vector");
  }
  for (double& x : v) x /= norm;
}

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return sq;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Nearest centroid by squared Euclidean distance, lowest index on ties.
size_t nearest_centroid(const std::vector<std::vector<double>>& centroids,
                        const std::vector<double>& point) {
  size_t best = 0;
  double best_d = squared_distance(centroids[0], point);
  for (size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], point);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Embedding providers

FrozenMlmEmbedder::FrozenMlmEmbedder(TransformerConfig backbone, uint64_t seed,
                                     size_t max_query_bytes)
    : vocab_(1),
      backbone_([&] {
        backbone.vocab_size = Vocabulary(1).size();
        backbone.directionality =
            TransformerConfig::Directionality::bidirectional;
        backbone.validate();
        Rng rng(seed);
        return Transformer(backbone, rng);
      }()),
      max_query_bytes_(max_query_bytes) {
  if (max_query_bytes_ == 0) {
    throw ContractError("FrozenMlmEmbedder: max_query_bytes must be positive");
  }
  if (backbone_.config().max_seq < 1 + max_query_bytes_) {
    throw ContractError(
        "FrozenMlmEmbedder: backbone max_seq too small for CLS plus query");
  }
}

std::vector<double> FrozenMlmEmbedder::embed(const std::string& query) {
  NoGradGuard no_grad;
  const std::vector<int> tokens =
      vocab_.encode(query, {"CLS"}, {}, 1 + max_query_bytes_);
  const std::vector<uint8_t> is_padding(tokens.size(), 0);
  const ForwardActivations act =
      mlm_forward(backbone_, vocab_.cls_id(), tokens, is_padding, false);
  std::vector<double> pooled = mean_rows(act.hidden).values();
  unit_normalize(pooled, "FrozenMlmEmbedder");
  return pooled;
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open embedding file '" + path + "'");
  }
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": missing record id");
    }
    std::vector<double> vec;
    double x = 0.0;
    while (fields >> x) vec.push_back(x);
    if (!fields.eof()) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": non-numeric embedding component");
    }
    if (vec.empty()) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": record '" + id + "' has no embedding components");
    }
    if (dim_ == 0) {
      dim_ = vec.size();
    } else if (vec.size() != dim_) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": record '" +
                        id + "' has " + std::to_string(vec.size()) +
                        " components, expected " + std::to_string(dim_));
    }
    for (double component : vec) {
      if (!std::isfinite(component)) {
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": non-finite embedding component");
      }
    }
    unit_normalize(vec, path + ":" + std::to_string(line_no));
    if (!table_.emplace(id, std::move(vec)).second) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": duplicate record id '" + id + "'");
    }
  }
  if (table_.empty()) {
    throw FormatError(path + ": embedding file holds no records");
  }
}

std::vector<double> FileEmbeddingProvider::embed(
    const std::string& record_id) {
  const auto it = table_.find(record_id);
  if (it == table_.end()) {
    throw ContractError("no stored embedding for record id '" + record_id +
                        "'");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// kNN

void NeighborIndex::validate() const {
  if (embeddings.size() != scores.size() || embeddings.size() != ids.size()) {
    throw ContractError("NeighborIndex: ids, embeddings and scores must have "
                        "equal row counts");
  }
  std::set<std::string> seen;
  for (const std::string& id : ids) {
    if (!seen.insert(id).second) {
      throw ContractError("NeighborIndex: duplicate record id '" + id + "'");
    }
  }
  for (size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != embeddings[0].size()) {
      throw ContractError("NeighborIndex: inconsistent embedding dimensions");
    }
    if (scores[i].size() != scores[0].size() || scores[i].empty()) {
      throw ContractError("NeighborIndex: inconsistent score dimensions");
    }
  }
}

NeighborIndex build_index(EmbeddingProvider& provider,
                          const std::vector<RoutingExample>& examples,
                          bool key_by_id) {
  if (examples.empty()) {
    throw ContractError("build_index: no examples");
  }
  NeighborIndex index;
  index.ids.reserve(examples.size());
  index.embeddings.reserve(examples.size());
  index.scores.reserve(examples.size());
  for (const RoutingExample& ex : examples) {
    if (ex.normalized.empty()) {
      throw ContractError("build_index: record '" + ex.id +
                          "' has no normalized scores");
    }
    index.ids.push_back(ex.id);
    index.embeddings.push_back(provider.embed(key_by_id ? ex.id : ex.query));
    index.scores.push_back(ex.normalized);
  }
  index.validate();
  return index;
}

RoutingDecision knn_route(const NeighborIndex& index,
                          const std::vector<double>& query_embedding,
                          size_t k) {
  index.validate();
  const size_t n = index.size();
  if (n == 0) throw ContractError("knn_route: empty index");
  if (k == 0 || k > n) {
    throw ContractError("knn_route: k must be in [1, " + std::to_string(n) +
                        "], got " + std::to_string(k));
  }
  if (query_embedding.size() != index.embeddings[0].size()) {
    throw ContractError("knn_route: query embedding dimension mismatch");
  }

  // Exhaustive scan; unit-norm rows make cosine distance 1 - <e, q>.
  std::vector<std::pair<double, size_t>> order(n);
  for (size_t i = 0; i < n; ++i) {
    order[i] = {1.0 - dot(index.embeddings[i], query_embedding), i};
  }
  std::sort(order.begin(), order.end());

  const size_t T = index.num_models();
  RoutingDecision decision;
  decision.scores.assign(T, 0.0);
  for (size_t j = 0; j < k; ++j) {
    const std::vector<double>& s = index.scores[order[j].second];
    for (size_t t = 0; t < T; ++t) decision.scores[t] += s[t];
  }
  for (double& s : decision.scores) s /= static_cast<double>(k);
  decision.selected = argmax_lowest_index(decision.scores);
  return decision;
}

// ---------------------------------------------------------------------------
// k-means

void ClusterModel::validate() const {
  if (centroids.empty() || centroids.size() != cluster_scores.size() ||
      centroids.size() != best_model.size()) {
    throw ContractError("ClusterModel: inconsistent per-cluster row counts");
  }
  for (size_t c = 0; c < k(); ++c) {
    if (best_model[c] < 1 ||
        best_model[c] > static_cast<int>(cluster_scores[c].size())) {
      throw ContractError("ClusterModel: best model index out of range");
    }
  }
}

ClusterModel kmeans_fit_from(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::vector<double>>& scores,
    std::vector<std::vector<double>> initial_centroids) {
  const size_t n = embeddings.size();
  const size_t k = initial_centroids.size();
  if (n == 0) throw ContractError("kmeans: no embeddings");
  if (scores.size() != n) {
    throw ContractError("kmeans: embeddings and scores row counts differ");
  }
  if (k == 0 || k > n) {
    throw ContractError("kmeans: k must be in [1, " + std::to_string(n) +
                        "], got " + std::to_string(k));
  }
  const size_t dim = embeddings[0].size();
  for (const auto& e : embeddings) {
    if (e.size() != dim) {
      throw ContractError("kmeans: inconsistent embedding dimensions");
    }
  }
  for (const auto& c : initial_centroids) {
    if (c.size() != dim) {
      throw ContractError("kmeans: centroid dimension mismatch");
    }
  }
  const size_t T = scores[0].size();
  for (const auto& s : scores) {
    if (s.size() != T || s.empty()) {
      throw ContractError("kmeans: inconsistent score dimensions");
    }
  }

  ClusterModel model;
  model.centroids = std::move(initial_centroids);
  std::vector<size_t> assignment(n, 0);

  constexpr size_t kMaxIterations = 100;
  constexpr double kMovementTolerance = 1e-6;
  for (size_t iter = 0; iter < kMaxIterations; ++iter) {
    // Assignment pass.
    std::vector<size_t> members(k, 0);
    for (size_t i = 0; i < n; ++i) {
      assignment[i] = nearest_centroid(model.centroids, embeddings[i]);
      ++members[assignment[i]];
    }

    // Any cluster left empty is re-seeded to the farthest point whose own
    // cluster can spare it; this keeps every centroid populated.
    for (size_t c = 0; c < k; ++c) {
      if (members[c] > 0) continue;
      double farthest = -1.0;
      size_t chosen = n;
      for (size_t i = 0; i < n; ++i) {
        if (members[assignment[i]] < 2) continue;
        const double d =
            squared_distance(embeddings[i], model.centroids[assignment[i]]);
        if (d > farthest) {
          farthest = d;
          chosen = i;
        }
      }
      if (chosen == n || farthest <= 0.0) {
        throw ContractError(
            "kmeans: cannot repopulate an empty cluster; fewer distinct "
            "embeddings than clusters");
      }
      logging::warn("kmeans: cluster " + std::to_string(c + 1) +
                    " became empty; re-seeded its centroid to the farthest "
                    "point");
      --members[assignment[chosen]];
      model.centroids[c] = embeddings[chosen];
      assignment[chosen] = c;
      ++members[c];
      ++model.reseed_events;
    }

    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sse += squared_distance(embeddings[i], model.centroids[assignment[i]]);
    }
    model.sse_trace.push_back(sse);

    // Update pass.
    std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < dim; ++j) {
        next[assignment[i]][j] += embeddings[i][j];
      }
    }
    double movement = 0.0;
    for (size_t c = 0; c < k; ++c) {
      for (size_t j = 0; j < dim; ++j) {
        next[c][j] /= static_cast<double>(members[c]);
      }
      movement =
          std::max(movement, std::sqrt(squared_distance(next[c],
                                                        model.centroids[c])));
      model.centroids[c] = std::move(next[c]);
    }
    model.iterations = iter + 1;
    if (movement < kMovementTolerance) break;
  }

  // Per-cluster statistics from the final assignment.
  model.cluster_scores.assign(k, std::vector<double>(T, 0.0));
  std::vector<size_t> members(k, 0);
  for (size_t i = 0; i < n; ++i) {
    ++members[assignment[i]];
    for (size_t t = 0; t < T; ++t) {
      model.cluster_scores[assignment[i]][t] += scores[i][t];
    }
  }
  model.best_model.assign(k, 1);
  for (size_t c = 0; c < k; ++c) {
    if (members[c] == 0) {
      throw ContractError("kmeans: cluster " + std::to_string(c + 1) +
                          " ended empty");
    }
    for (double& s : model.cluster_scores[c]) {
      s /= static_cast<double>(members[c]);
    }
    model.best_model[c] = argmax_lowest_index(model.cluster_scores[c]);
  }
  model.validate();
  return model;
}

ClusterModel kmeans_fit(const std::vector<std::vector<double>>& embeddings,
                        const std::vector<std::vector<double>>& scores,
                        size_t k, uint64_t seed) {
  const size_t n = embeddings.size();
  if (n == 0) throw ContractError("kmeans: no embeddings");
  if (k == 0 || k > n) {
    throw ContractError("kmeans: k must be in [1, " + std::to_string(n) +
                        "], got " + std::to_string(k));
  }

  // Seeded k-means++: first centroid uniform, the rest by squared-distance
  // weighted sampling.
  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  centroids.push_back(embeddings[rng.below(n)]);
  std::vector<double> d2(n, 0.0);
  while (centroids.size() < k) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = squared_distance(embeddings[i], centroids[0]);
      for (size_t c = 1; c < centroids.size(); ++c) {
        best = std::min(best, squared_distance(embeddings[i], centroids[c]));
      }
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      throw ContractError(
          "kmeans: fewer distinct embeddings than requested clusters");
    }
    const double r = rng.uniform() * total;
    double cumulative = 0.0;
    size_t pick = n - 1;
    for (size_t i = 0; i < n; ++i) {
      cumulative += d2[i];
      if (r < cumulative) {
        pick = i;
        break;
      }
    }
    centroids.push_back(embeddings[pick]);
  }
  return kmeans_fit_from(embeddings, scores, std::move(centroids));
}

RoutingDecision kmeans_route(const ClusterModel& model,
                             const std::vector<double>& query_embedding) {
  model.validate();
  if (query_embedding.size() != model.centroids[0].size()) {
    throw ContractError("kmeans_route: query embedding dimension mismatch");
  }
  const size_t c = nearest_centroid(model.centroids, query_embedding);
  RoutingDecision decision;
  decision.scores = model.cluster_scores[c];
  decision.selected = model.best_model[c];
  return decision;
}

// ---------------------------------------------------------------------------
// Router adapters

KnnRouter::KnnRouter(std::shared_ptr<EmbeddingProvider> provider,
                     NeighborIndex index, size_t k, bool key_by_id)
    : provider_(std::move(provider)),
      index_(std::move(index)),
      k_(k),
      key_by_id_(key_by_id) {
  if (!provider_) throw ContractError("KnnRouter: null embedding provider");
  index_.validate();
  if (k_ == 0 || k_ > index_.size()) {
    throw ContractError("KnnRouter: k must be in [1, " +
                        std::to_string(index_.size()) + "], got " +
                        std::to_string(k_));
  }
}

RoutingDecision KnnRouter::route(const std::string& query) {
  const auto start = std::chrono::steady_clock::now();
  RoutingDecision decision = knn_route(index_, provider_->embed(query), k_);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

RoutingDecision KnnRouter::route_example(const RoutingExample& example) {
  return route(key_by_id_ ? example.id : example.query);
}

KmeansRouter::KmeansRouter(std::shared_ptr<EmbeddingProvider> provider,
                           ClusterModel model, bool key_by_id)
    : provider_(std::move(provider)),
      model_(std::move(model)),
      key_by_id_(key_by_id) {
  if (!provider_) throw ContractError("KmeansRouter: null embedding provider");
  model_.validate();
}

RoutingDecision KmeansRouter::route(const std::string& query) {
  const auto start = std::chrono::steady_clock::now();
  RoutingDecision decision = kmeans_route(model_, provider_->embed(query));
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

RoutingDecision KmeansRouter::route_example(const RoutingExample& example) {
  return route(key_by_id_ ? example.id : example.query);
}

// ---------------------------------------------------------------------------
// Query-only classifiers

namespace {

Transformer make_query_encoder(LookaheadConfig& config, uint64_t init_seed) {
  config.validate();
  TransformerConfig bc = config.backbone;
  bc.vocab_size = Vocabulary(config.num_models).size();
  bc.directionality = config.variant == Variant::mlm
                          ? TransformerConfig::Directionality::bidirectional
                          : TransformerConfig::Directionality::causal;
  bc.validate();
  Rng rng(init_seed);
  return Transformer(bc, rng);
}

}  // namespace

MlcRouter::MlcRouter(LookaheadConfig config, uint64_t init_seed)
    : config_(std::move(config)),
      vocab_(config_.num_models),
      backbone_([&] {
        if (config_.lambda != 0.0) {
          throw ContractError(
              "mlc has no response modeling; config lambda must be 0");
        }
        return make_query_encoder(config_, init_seed);
      }()) {
  config_.backbone = backbone_.config();
  const size_t d = config_.backbone.d_model;
  const size_t T = config_.num_models;
  Rng rng(init_seed ^ 0x6d6c7068ULL);
  mlp_w1_ = init_matrix(d, d, rng);
  mlp_b1_ = Tensor::zeros({1, d}, true);
  // Final layer starts at zero so an untrained router scores every model 0.5.
  mlp_w2_ = Tensor::zeros({d, T}, true);
  mlp_b2_ = Tensor::zeros({1, T}, true);
}

Tensor MlcRouter::query_state(const std::string& query) const {
  if (config_.variant == Variant::mlm) {
    const std::vector<int> tokens =
        vocab_.encode(query, {"CLS"}, {}, 1 + config_.max_query_bytes);
    const std::vector<uint8_t> is_padding(tokens.size(), 0);
    const ForwardActivations act =
        mlm_forward(backbone_, vocab_.cls_id(), tokens, is_padding, false);
    return gather_rows(act.hidden, {0});
  }
  const std::vector<int> tokens =
      vocab_.encode(query, {}, {}, config_.max_query_bytes);
  if (tokens.empty()) {
    throw ContractError("causal query classifier requires a nonempty query");
  }
  const size_t len = tokens.size();
  const ForwardActivations act =
      backbone_.forward(tokens, build_causal_mask(len),
                        sequential_positions(len), false);
  return gather_rows(act.hidden, {len - 1});
}

Tensor MlcRouter::scores_from_state(const Tensor& state) const {
  const Tensor h = gelu(add(matmul(state, mlp_w1_), mlp_b1_));
  return sigmoid(add(matmul(h, mlp_w2_), mlp_b2_));
}

RoutingDecision MlcRouter::route(const std::string& query) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const Tensor scores = scores_from_state(query_state(query));
  RoutingDecision decision;
  decision.scores = scores.values();
  decision.selected = argmax_lowest_index(decision.scores);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

LossParts MlcRouter::example_loss(const RoutingExample& example,
                                  const CurriculumState&) {
  if (example.labels.size() != config_.num_models) {
    throw ContractError("record '" + example.id + "' carries " +
                        std::to_string(example.labels.size()) +
                        " labels for a " + std::to_string(config_.num_models) +
                        "-model router");
  }
  LossParts parts;
  parts.route = routing_loss_bce(scores_from_state(query_state(example.query)),
                                 example.labels);
  parts.resp = Tensor::scalar(0.0);
  parts.joint = parts.route;
  return parts;
}

std::vector<NamedTensor> MlcRouter::named_parameters() {
  std::vector<NamedTensor> params = backbone_.named_parameters();
  params.push_back({"mlp.w1", mlp_w1_});
  params.push_back({"mlp.b1", mlp_b1_});
  params.push_back({"mlp.w2", mlp_w2_});
  params.push_back({"mlp.b2", mlp_b2_});
  return params;
}

std::string MlcRouter::kind() const {
  return "mlc-" + to_string(config_.variant);
}

std::string MlcRouter::config_json() const { return config_.to_json(); }

std::vector<double> MlcRouter::routing_state(const std::string& query) {
  NoGradGuard no_grad;
  return query_state(query).values();
}

// ---------------------------------------------------------------------------
// ZOOTER

std::vector<double> zooter_target(const std::vector<double>& normalized,
                                  double tau) {
  if (normalized.empty()) {
    throw ContractError("zooter_target: no scores");
  }
  if (!(tau > 0.0)) {
    throw ContractError("zooter_target: tau must be positive");
  }
  double max_v = normalized[0];
  for (double v : normalized) {
    if (!std::isfinite(v)) {
      throw ContractError("zooter_target: non-finite score");
    }
    max_v = std::max(max_v, v);
  }
  std::vector<double> target(normalized.size());
  double total = 0.0;
  for (size_t t = 0; t < normalized.size(); ++t) {
    target[t] = std::exp((normalized[t] - max_v) / tau);
    total += target[t];
  }
  for (double& p : target) p /= total;
  return target;
}

Tensor kl_divergence(const std::vector<double>& target,
                     const Tensor& log_pred) {
  const Shape& shape = log_pred.shape();
  if (target.empty() || shape.size() != 2 || shape[0] != 1 ||
      shape[1] != target.size()) {
    throw ContractError("kl_divergence: target and prediction sizes differ");
  }
  double entropy_term = 0.0;  // sum p log p, with 0 log 0 = 0
  for (double p : target) {
    if (p < 0.0 || !std::isfinite(p)) {
      throw ContractError("kl_divergence: target is not a distribution");
    }
    if (p > 0.0) entropy_term += p * std::log(p);
  }
  const Tensor p = Tensor::from_values({1, target.size()},
                                       std::vector<double>(target));
  return add(Tensor::scalar(entropy_term), neg(reduce_sum(mul(p, log_pred))));
}

ZooterRouter::ZooterRouter(LookaheadConfig config, double tau,
                           uint64_t init_seed)
    : config_(std::move(config)),
      tau_(tau),
      vocab_(config_.num_models),
      backbone_([&] {
        if (config_.lambda != 0.0) {
          throw ContractError(
              "zooter has no response modeling; config lambda must be 0");
        }
        if (!(tau > 0.0)) {
          throw ContractError("zooter: tau must be positive");
        }
        return make_query_encoder(config_, init_seed);
      }()) {
  config_.backbone = backbone_.config();
  const size_t d = config_.backbone.d_model;
  const size_t T = config_.num_models;
  Rng rng(init_seed ^ 0x6d6c7068ULL);
  mlp_w1_ = init_matrix(d, d, rng);
  mlp_b1_ = Tensor::zeros({1, d}, true);
  // Zero final layer: the untrained predictor is the uniform distribution.
  mlp_w2_ = Tensor::zeros({d, T}, true);
  mlp_b2_ = Tensor::zeros({1, T}, true);
}

Tensor ZooterRouter::query_state(const std::string& query) const {
  if (config_.variant == Variant::mlm) {
    const std::vector<int> tokens =
        vocab_.encode(query, {"CLS"}, {}, 1 + config_.max_query_bytes);
    const std::vector<uint8_t> is_padding(tokens.size(), 0);
    const ForwardActivations act =
        mlm_forward(backbone_, vocab_.cls_id(), tokens, is_padding, false);
    return gather_rows(act.hidden, {0});
  }
  const std::vector<int> tokens =
      vocab_.encode(query, {}, {}, config_.max_query_bytes);
  if (tokens.empty()) {
    throw ContractError("causal query classifier requires a nonempty query");
  }
  const size_t len = tokens.size();
  const ForwardActivations act =
      backbone_.forward(tokens, build_causal_mask(len),
                        sequential_positions(len), false);
  return gather_rows(act.hidden, {len - 1});
}

Tensor ZooterRouter::logits_from_state(const Tensor& state) const {
  const Tensor h = gelu(add(matmul(state, mlp_w1_), mlp_b1_));
  return add(matmul(h, mlp_w2_), mlp_b2_);
}

RoutingDecision ZooterRouter::route(const std::string& query) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const Tensor probs = softmax_rows(logits_from_state(query_state(query)));
  RoutingDecision decision;
  decision.scores = probs.values();
  decision.selected = argmax_lowest_index(decision.scores);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

LossParts ZooterRouter::example_loss(const RoutingExample& example,
                                     const CurriculumState&) {
  if (example.normalized.size() != config_.num_models) {
    throw ContractError("record '" + example.id + "' carries " +
                        std::to_string(example.normalized.size()) +
                        " normalized scores for a " +
                        std::to_string(config_.num_models) + "-model router");
  }
  const std::vector<double> target = zooter_target(example.normalized, tau_);
  const Tensor log_pred =
      log_softmax_rows(logits_from_state(query_state(example.query)));
  LossParts parts;
  parts.route = kl_divergence(target, log_pred);
  parts.resp = Tensor::scalar(0.0);
  parts.joint = parts.route;
  return parts;
}

std::vector<NamedTensor> ZooterRouter::named_parameters() {
  std::vector<NamedTensor> params = backbone_.named_parameters();
  params.push_back({"mlp.w1", mlp_w1_});
  params.push_back({"mlp.b1", mlp_b1_});
  params.push_back({"mlp.w2", mlp_w2_});
  params.push_back({"mlp.b2", mlp_b2_});
  return params;
}

std::string ZooterRouter::kind() const {
  return "zooter-" + to_string(config_.variant);
}

std::string ZooterRouter::config_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(config_.to_json());
  j["tau"] = tau_;
  return j.dump();
}

std::vector<double> ZooterRouter::routing_state(const std::string& query) {
  NoGradGuard no_grad;
  return query_state(query).values();
}

// ---------------------------------------------------------------------------
// Reference methods

RoutingDecision random_route(size_t num_models, Rng& rng) {
  if (num_models == 0) {
    throw ContractError("random_route: need at least one model");
  }
  RoutingDecision decision;
  decision.scores.assign(num_models, 1.0 / static_cast<double>(num_models));
  decision.selected = 1 + static_cast<int>(rng.below(num_models));
  return decision;
}

RoutingDecision oracle_route(const std::vector<double>& scores) {
  if (scores.empty()) {
    throw ContractError("oracle_route: ground-truth scores are missing");
  }
  RoutingDecision decision;
  decision.scores = scores;
  decision.selected = argmax_lowest_index(scores);
  return decision;
}

RoutingDecision reward_select(const std::vector<double>& judge_scores) {
  if (judge_scores.empty()) {
    throw ContractError("reward_select: judge scores are missing");
  }
  RoutingDecision decision;
  decision.scores = judge_scores;
  decision.selected = argmax_lowest_index(judge_scores);
  return decision;
}

RoutingDecision OracleRouter::route(const std::string&) {
  throw ContractError(
      "oracle routing needs ground-truth scores; route whole records");
}

RoutingDecision OracleRouter::route_example(const RoutingExample& example) {
  if (example.normalized.size() != num_models_) {
    throw ContractError("record '" + example.id +
                        "' lacks the ground-truth scores oracle routing "
                        "needs");
  }
  return oracle_route(example.normalized);
}

RoutingDecision RewardSelectRouter::route(const std::string&) {
  throw ContractError(
      "reward selection needs scored responses; route whole records");
}

RoutingDecision RewardSelectRouter::route_example(
    const RoutingExample& example) {
  const std::vector<double> judged =
      judge_ ? judge_(example) : example.normalized;
  if (judged.size() != num_models_) {
    throw ContractError("record '" + example.id + "' produced " +
                        std::to_string(judged.size()) +
                        " judge scores for a " + std::to_string(num_models_) +
                        "-model selector");
  }
  return reward_select(judged);
}

}  // namespace lahr
