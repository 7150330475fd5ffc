#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lahr/baselines.hpp"
#include "lahr/log.hpp"
#include "lahr/train.hpp"

using namespace lahr;

namespace {

TransformerConfig tiny_backbone() {
  TransformerConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.max_seq = 96;
  return cfg;
}

LookaheadConfig classifier_config(Variant variant, size_t T) {
  LookaheadConfig cfg =
      variant == Variant::clm ? default_clm_config(T) : default_mlm_config(T);
  cfg.lambda = 0.0;
  cfg.backbone = tiny_backbone();
  cfg.max_query_bytes = 24;
  return cfg;
}

// Deterministic unit vector on the d-sphere.
std::vector<double> random_unit(Rng& rng, size_t d) {
  std::vector<double> v(d);
  double sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
  return v;
}

// Brute-force reference: mean score over the k nearest rows by cosine
// distance (ties toward lower index), then argmax.
int knn_oracle(const NeighborIndex& index, const std::vector<double>& q,
               size_t k) {
  std::vector<std::pair<double, size_t>> dist;
  for (size_t i = 0; i < index.size(); ++i) {
    double d = 1.0;
    for (size_t j = 0; j < q.size(); ++j) {
      d -= index.embeddings[i][j] * q[j];
    }
    dist.push_back({d, i});
  }
  std::stable_sort(dist.begin(), dist.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> mean(index.num_models(), 0.0);
  for (size_t j = 0; j < k; ++j) {
    for (size_t t = 0; t < mean.size(); ++t) {
      mean[t] += index.scores[dist[j].second][t] / static_cast<double>(k);
    }
  }
  return argmax_lowest_index(mean);
}

std::vector<RoutingExample> tiny_corpus(size_t n, size_t T, uint64_t seed) {
  SpecializationPlan plan = make_plan(T, T, 1.0, 0.0, seed);
  CorpusSplit split = generate_synthetic(plan, {n, 0, 0});
  return split.train;
}

}  // namespace

TEST_CASE("frozen embedder: deterministic unit vectors") {
  FrozenMlmEmbedder embedder(tiny_backbone(), 7, 24);
  CHECK(embedder.dim() == 16);
  const std::vector<double> a = embedder.embed("hello world");
  const std::vector<double> b = embedder.embed("hello world");
  const std::vector<double> c = embedder.embed("another query");
  CHECK(a == b);
  CHECK(a != c);
  double sq = 0.0;
  for (double x : a) sq += x * x;
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));

  FrozenMlmEmbedder same_seed(tiny_backbone(), 7, 24);
  CHECK(same_seed.embed("hello world") == a);
  FrozenMlmEmbedder other_seed(tiny_backbone(), 8, 24);
  CHECK(other_seed.embed("hello world") != a);
}

TEST_CASE("file embedding provider round trip and errors") {
  const std::string path = "test_embeddings.txt";
  {
    std::ofstream out(path);
    out << "rec-a 1.0 0.0 0.0\n";
    out << "rec-b 3.0 4.0 0.0\n";
    out << "\n";
    out << "rec-c 0.0 0.0 2.0\n";
  }
  FileEmbeddingProvider provider(path);
  CHECK(provider.dim() == 3);
  CHECK(provider.size() == 3);
  const std::vector<double> b = provider.embed("rec-b");
  CHECK(b[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(b[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(b[2] == 0.0);
  CHECK_THROWS_AS(provider.embed("rec-zz"), ContractError);

  {
    std::ofstream out(path);
    out << "rec-a 1.0 0.0\n";
    out << "rec-b 1.0 0.0 0.0\n";
  }
  CHECK_THROWS_WITH_AS(FileEmbeddingProvider{path}, doctest::Contains(":2:"),
                       FormatError);
  {
    std::ofstream out(path);
    out << "rec-a 1.0 zebra\n";
  }
  CHECK_THROWS_AS(FileEmbeddingProvider{path}, FormatError);
  {
    std::ofstream out(path);
    out << "rec-a 1.0 0.0\n";
    out << "rec-a 0.0 1.0\n";
  }
  CHECK_THROWS_WITH_AS(FileEmbeddingProvider{path},
                       doctest::Contains("duplicate"), FormatError);
  {
    std::ofstream out(path);
  }
  CHECK_THROWS_AS(FileEmbeddingProvider{path}, FormatError);
  std::remove(path.c_str());
}

TEST_CASE("knn: single record and whole-index neighborhoods") {
  NeighborIndex index;
  index.ids = {"a"};
  index.embeddings = {{1.0, 0.0}};
  index.scores = {{0.2, 0.9}};
  const RoutingDecision one = knn_route(index, {0.0, 1.0}, 1);
  CHECK(one.selected == 2);
  CHECK(one.scores == std::vector<double>{0.2, 0.9});

  // k = n averages every stored score vector regardless of the query.
  Rng rng(41);
  NeighborIndex big;
  std::vector<double> global(3, 0.0);
  for (int i = 0; i < 30; ++i) {
    big.ids.push_back("r" + std::to_string(i));
    big.embeddings.push_back(random_unit(rng, 8));
    std::vector<double> s = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (size_t t = 0; t < 3; ++t) global[t] += s[t] / 30.0;
    big.scores.push_back(s);
  }
  const RoutingDecision all = knn_route(big, random_unit(rng, 8), 30);
  CHECK(all.selected == argmax_lowest_index(global));
  for (size_t t = 0; t < 3; ++t) {
    CHECK(all.scores[t] == doctest::Approx(global[t]).epsilon(1e-12));
  }
}

TEST_CASE("knn matches the brute-force oracle on random instances") {
  Rng rng(42);
  NeighborIndex index;
  for (int i = 0; i < 50; ++i) {
    index.ids.push_back("r" + std::to_string(i));
    index.embeddings.push_back(random_unit(rng, 12));
    index.scores.push_back({rng.uniform(), rng.uniform(), rng.uniform(),
                            rng.uniform()});
  }
  for (int trial = 0; trial < 25; ++trial) {
    const std::vector<double> q = random_unit(rng, 12);
    const size_t k = 1 + rng.below(50);
    CHECK(knn_route(index, q, k).selected == knn_oracle(index, q, k));
  }
}

TEST_CASE("knn contract errors") {
  NeighborIndex empty;
  CHECK_THROWS_AS(knn_route(empty, {1.0}, 1), ContractError);
  NeighborIndex index;
  index.ids = {"a", "b"};
  index.embeddings = {{1.0, 0.0}, {0.0, 1.0}};
  index.scores = {{1.0}, {0.0}};
  CHECK_THROWS_AS(knn_route(index, {1.0, 0.0}, 0), ContractError);
  CHECK_THROWS_AS(knn_route(index, {1.0, 0.0}, 3), ContractError);
  CHECK_THROWS_AS(knn_route(index, {1.0}, 1), ContractError);
  index.ids = {"a", "a"};
  CHECK_THROWS_WITH_AS(knn_route(index, {1.0, 0.0}, 1),
                       doctest::Contains("duplicate"), ContractError);
}

TEST_CASE("kmeans: k=1 routes everything to the global best model") {
  Rng rng(43);
  std::vector<std::vector<double>> embeddings;
  std::vector<std::vector<double>> scores;
  std::vector<double> global(3, 0.0);
  for (int i = 0; i < 40; ++i) {
    embeddings.push_back(random_unit(rng, 6));
    scores.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    for (size_t t = 0; t < 3; ++t) global[t] += scores.back()[t] / 40.0;
  }
  const ClusterModel model = kmeans_fit(embeddings, scores, 1, 9);
  CHECK(model.k() == 1);
  for (int trial = 0; trial < 10; ++trial) {
    CHECK(kmeans_route(model, random_unit(rng, 6)).selected ==
          argmax_lowest_index(global));
  }
}

TEST_CASE("kmeans separates planted blobs with opposite best models") {
  // Two tight caps on the unit sphere around +e1 and -e1; model 1 wins on
  // the first blob, model 2 on the second.
  Rng rng(44);
  std::vector<std::vector<double>> embeddings;
  std::vector<std::vector<double>> scores;
  for (int i = 0; i < 60; ++i) {
    const bool left = i < 30;
    std::vector<double> v(5, 0.0);
    v[0] = left ? 1.0 : -1.0;
    for (size_t j = 1; j < 5; ++j) v[j] = rng.normal() * 0.05;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    for (double& x : v) x /= std::sqrt(sq);
    embeddings.push_back(v);
    scores.push_back(left ? std::vector<double>{0.9, 0.1}
                          : std::vector<double>{0.1, 0.9});
  }
  const ClusterModel model = kmeans_fit(embeddings, scores, 2, 5);
  CHECK(model.reseed_events == 0);
  std::vector<double> left_probe(5, 0.0), right_probe(5, 0.0);
  left_probe[0] = 1.0;
  right_probe[0] = -1.0;
  CHECK(kmeans_route(model, left_probe).selected == 1);
  CHECK(kmeans_route(model, right_probe).selected == 2);
  // Lloyd's SSE is nonincreasing across assignment passes.
  for (size_t i = 1; i < model.sse_trace.size(); ++i) {
    CHECK(model.sse_trace[i] <= model.sse_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("kmeans re-seeds a cluster that starts empty") {
  // All points sit near +e1, and one initial centroid is placed at -e1
  // where it captures nothing.
  Rng rng(45);
  std::vector<std::vector<double>> embeddings;
  std::vector<std::vector<double>> scores;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> v(4, 0.0);
    v[0] = 1.0;
    for (size_t j = 1; j < 4; ++j) v[j] = rng.normal() * 0.1;
    double sq = 0.0;
    for (double x : v) sq += x * x;
    for (double& x : v) x /= std::sqrt(sq);
    embeddings.push_back(v);
    scores.push_back({rng.uniform(), rng.uniform()});
  }
  std::vector<std::vector<double>> init = {embeddings[0],
                                           {-1.0, 0.0, 0.0, 0.0}};
  logging::WarningCapture capture;
  const ClusterModel model = kmeans_fit_from(embeddings, scores, init);
  CHECK(model.reseed_events >= 1);
  CHECK(capture.contains("empty"));
  model.validate();
  // Both clusters ended populated: their mean score rows differ from zero.
  CHECK(model.cluster_scores.size() == 2);
}

TEST_CASE("kmeans rejects more clusters than distinct points") {
  std::vector<std::vector<double>> embeddings(5, {1.0, 0.0});
  std::vector<std::vector<double>> scores(5, {0.5, 0.5});
  CHECK_THROWS_WITH_AS(kmeans_fit(embeddings, scores, 2, 3),
                       doctest::Contains("distinct"), ContractError);
  CHECK_THROWS_AS(kmeans_fit(embeddings, scores, 6, 3), ContractError);
  CHECK_THROWS_AS(kmeans_fit(embeddings, scores, 0, 3), ContractError);
}

TEST_CASE("knn and kmeans routers wrap the shared interface") {
  const size_t T = 2;
  const std::vector<RoutingExample> corpus = tiny_corpus(40, T, 46);
  auto provider = std::make_shared<FrozenMlmEmbedder>(tiny_backbone(), 7, 24);
  NeighborIndex index = build_index(*provider, corpus);
  CHECK(index.size() == 40);
  CHECK(index.num_models() == T);

  KnnRouter knn(provider, index, 5);
  CHECK(knn.kind() == "knn");
  CHECK(knn.num_models() == T);
  const RoutingDecision kd = knn.route(corpus[0].query);
  CHECK(kd.scores.size() == T);
  CHECK((kd.selected >= 1 && kd.selected <= static_cast<int>(T)));

  std::vector<std::vector<double>> scores;
  for (const auto& ex : corpus) scores.push_back(ex.normalized);
  KmeansRouter km(provider, kmeans_fit(index.embeddings, scores, 4, 11));
  CHECK(km.kind() == "kmeans");
  const RoutingDecision md = km.route_example(corpus[1]);
  CHECK(md.scores.size() == T);
  CHECK((md.selected >= 1 && md.selected <= static_cast<int>(T)));

  // Default k exceeding the index size is rejected up front.
  CHECK_THROWS_AS(KnnRouter(provider, index, 100), ContractError);
}

TEST_CASE("untrained query-only classifier scores 0.5 everywhere") {
  for (Variant variant : {Variant::mlm, Variant::clm}) {
    MlcRouter router(classifier_config(variant, 3), 21);
    const RoutingDecision d = router.route("which model should answer");
    REQUIRE(d.scores.size() == 3);
    for (double s : d.scores) CHECK(s == 0.5);
    CHECK(d.selected == 1);
    CHECK(router.kind() ==
          (variant == Variant::mlm ? "mlc-mlm" : "mlc-clm"));
  }
}

TEST_CASE("mlc rejects response modeling and trains to overfit") {
  LookaheadConfig bad = classifier_config(Variant::mlm, 2);
  bad.lambda = 0.5;
  CHECK_THROWS_AS(MlcRouter(bad, 1), ContractError);

  const std::vector<RoutingExample> corpus = tiny_corpus(10, 2, 47);
  MlcRouter router(classifier_config(Variant::mlm, 2), 22);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 10;
  tc.optim.lr = 2e-3;
  tc.validate_every = 10;
  tc.seed = 3;
  const TrainResult result = train_router(router, corpus, corpus, tc);
  CHECK(result.best_validation_accuracy == 1.0);
  CHECK(result.checkpoint.kind == "mlc-mlm");
  CHECK(validation_accuracy(router, corpus) == 1.0);
}

TEST_CASE("zooter target construction") {
  const std::vector<double> equal = {0.5, 0.5, 0.5};
  const std::vector<double> uniform = zooter_target(equal, 1.0);
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));

  // tau -> 0+ concentrates the target on the best model.
  const std::vector<double> sharp = zooter_target({1.0, 0.0, 0.5}, 1e-6);
  CHECK(sharp[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sharp[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sharp[2] == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(zooter_target(equal, 0.0), ContractError);
  CHECK_THROWS_AS(zooter_target(equal, -1.0), ContractError);
  CHECK_THROWS_AS(zooter_target({}, 1.0), ContractError);
}

TEST_CASE("kl divergence: zero at match, positive otherwise") {
  // Untrained predictor emits the uniform distribution; a uniform target
  // therefore gives (numerically) zero divergence.
  ZooterRouter router(classifier_config(Variant::mlm, 4), 1.0, 23);
  const RoutingDecision d = router.route("any query");
  for (double p : d.scores) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  RoutingExample ex = tiny_corpus(1, 4, 48)[0];
  ex.normalized = {0.7, 0.7, 0.7, 0.7};
  CurriculumState state;
  const LossParts parts = router.example_loss(ex, state);
  CHECK(std::abs(parts.route.scalar_value()) < 1e-12);

  // Gibbs' inequality within floating-point slack on random pairs.
  Rng rng(49);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(5);
    for (double& x : logits) x = rng.normal() * 2.0;
    const Tensor log_pred =
        log_softmax_rows(Tensor::from_values({1, 5}, logits));
    std::vector<double> raw(5);
    for (double& x : raw) x = rng.uniform();
    const std::vector<double> target = zooter_target(raw, 0.7);
    CHECK(kl_divergence(target, log_pred).scalar_value() >= -1e-12);
  }
}

TEST_CASE("zooter trains and keeps a proper distribution head") {
  const std::vector<RoutingExample> corpus = tiny_corpus(10, 2, 50);
  ZooterRouter router(classifier_config(Variant::mlm, 2), /*tau=*/0.25, 24);
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 10;
  tc.optim.lr = 2e-3;
  tc.validate_every = 10;
  tc.seed = 3;
  const TrainResult result = train_router(router, corpus, corpus, tc);
  CHECK(result.best_validation_accuracy == 1.0);
  CHECK(result.checkpoint.kind == "zooter-mlm");
  const RoutingDecision d = router.route(corpus[0].query);
  double total = 0.0;
  for (double p : d.scores) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(ZooterRouter(classifier_config(Variant::mlm, 2), 0.0, 1),
                  ContractError);
}

TEST_CASE("reference methods: oracle, random, reward-select") {
  const RoutingDecision o = oracle_route({0.1, 0.9, 0.3});
  CHECK(o.selected == 2);
  CHECK_THROWS_AS(oracle_route({}), ContractError);

  // Uniformity: frequency of each model within 3 sigma over 1e5 draws.
  const size_t T = 4;
  const size_t draws = 100000;
  Rng rng(51);
  std::vector<size_t> counts(T, 0);
  for (size_t i = 0; i < draws; ++i) {
    const RoutingDecision d = random_route(T, rng);
    ++counts[d.selected - 1];
    CHECK(d.scores[0] == 0.25);
  }
  const double p = 1.0 / static_cast<double>(T);
  const double sigma = std::sqrt(p * (1 - p) * static_cast<double>(draws));
  for (size_t t = 0; t < T; ++t) {
    CHECK(std::abs(static_cast<double>(counts[t]) -
                   p * static_cast<double>(draws)) <= 3.0 * sigma);
  }

  // Reward selection with a ground-truth judge collapses to the oracle.
  const std::vector<RoutingExample> corpus = tiny_corpus(30, 3, 52);
  OracleRouter oracle(3);
  RewardSelectRouter reward(3);
  for (const auto& ex : corpus) {
    CHECK(reward.route_example(ex).selected ==
          oracle.route_example(ex).selected);
  }
  CHECK_THROWS_AS(oracle.route("bare query"), ContractError);
  CHECK_THROWS_AS(reward.route("bare query"), ContractError);

  RoutingExample missing = corpus[0];
  missing.normalized.clear();
  CHECK_THROWS_AS(oracle.route_example(missing), ContractError);

  // A judge that inverts the scores picks the worst model instead.
  RewardSelectRouter inverted(3, [](const RoutingExample& ex) {
    std::vector<double> flipped = ex.normalized;
    for (double& s : flipped) s = 1.0 - s;
    return flipped;
  });
  for (const auto& ex : corpus) {
    const int worst = inverted.route_example(ex).selected;
    std::vector<double> flipped = ex.normalized;
    for (double& s : flipped) s = 1.0 - s;
    CHECK(worst == argmax_lowest_index(flipped));
  }
}

TEST_CASE("every baseline satisfies the shared routing contract") {
  const size_t T = 2;
  const std::vector<RoutingExample> corpus = tiny_corpus(20, T, 53);
  auto provider = std::make_shared<FrozenMlmEmbedder>(tiny_backbone(), 7, 24);
  NeighborIndex index = build_index(*provider, corpus);
  std::vector<std::vector<double>> scores;
  for (const auto& ex : corpus) scores.push_back(ex.normalized);

  KnnRouter knn(provider, index, 3);
  KmeansRouter km(provider, kmeans_fit(index.embeddings, scores, 3, 2));
  MlcRouter mlc(classifier_config(Variant::mlm, T), 60);
  ZooterRouter zooter(classifier_config(Variant::clm, T), 1.0, 61);
  RandomRouter random_router(T, 62);
  OracleRouter oracle(T);
  RewardSelectRouter reward(T);

  std::vector<Router*> routers = {&knn,          &km,     &mlc, &zooter,
                                  &random_router, &oracle, &reward};
  for (Router* r : routers) {
    CHECK(r->num_models() == T);
    const double acc = validation_accuracy(*r, corpus);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  OracleRouter exact(T);
  CHECK(validation_accuracy(exact, corpus) == 1.0);
}
