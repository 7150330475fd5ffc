#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lahr/corpus.hpp"
#include "lahr/log.hpp"
#include "lahr/rng.hpp"

using namespace lahr;

namespace {

RoutingExample make_example(const std::string& id, const std::string& tag,
                            std::vector<double> raw,
                            RecordKind kind = RecordKind::verifiable) {
  RoutingExample ex;
  ex.id = id;
  ex.tag = tag;
  ex.kind = kind;
  ex.query = "q " + id;
  ex.responses.assign(raw.size(), "r");
  ex.raw = std::move(raw);
  return ex;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string temp_path(const std::string& name) {
  return "/tmp/lahr_corpus_test_" + name;
}

}  // namespace

TEST_CASE("normalize maps a group's raw range onto [0,1]") {
  std::vector<RoutingExample> ex = {make_example("a", "g", {0.0, 5.0, 10.0})};
  normalize_scores(ex);
  CHECK(ex[0].normalized == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("degenerate group normalizes to 0.5 with a warning") {
  std::vector<RoutingExample> ex = {make_example("a", "g", {3.0, 3.0}),
                                    make_example("b", "g", {3.0, 3.0})};
  logging::WarningCapture capture;
  normalize_scores(ex);
  CHECK(ex[0].normalized == std::vector<double>{0.5, 0.5});
  CHECK(ex[1].normalized == std::vector<double>{0.5, 0.5});
  CHECK(capture.contains("degenerate"));
}

TEST_CASE("groups normalize independently") {
  std::vector<RoutingExample> ex = {make_example("a", "g1", {0.0, 2.0}),
                                    make_example("b", "g2", {100.0, 200.0})};
  normalize_scores(ex);
  CHECK(ex[0].normalized == std::vector<double>{0.0, 1.0});
  CHECK(ex[1].normalized == std::vector<double>{0.0, 1.0});
}

TEST_CASE("NaN raw score rejected naming the record") {
  std::vector<RoutingExample> ex = {
      make_example("bad-rec", "g", {1.0, std::nan("")})};
  CHECK_THROWS_WITH_AS(normalize_scores(ex),
                       doctest::Contains("bad-rec"), FormatError);
}

TEST_CASE("normalization is idempotent") {
  Rng rng(11);
  std::vector<RoutingExample> ex;
  for (int i = 0; i < 20; ++i) {
    ex.push_back(make_example("e" + std::to_string(i), i % 2 ? "g1" : "g2",
                              {rng.uniform(0, 9), rng.uniform(0, 9),
                               rng.uniform(0, 9)}));
  }
  normalize_scores(ex);
  std::vector<std::vector<double>> first;
  for (const auto& e : ex) first.push_back(e.normalized);
  normalize_scores(ex);
  for (size_t i = 0; i < ex.size(); ++i) CHECK(ex[i].normalized == first[i]);
}

TEST_CASE("binarize is inclusive at the threshold") {
  RoutingExample ex = make_example("a", "g", {0.0, 0.0, 0.0});
  ex.normalized = {0.79, 0.80, 1.0};
  binarize(ex, 0.8);
  CHECK(ex.labels == std::vector<double>{0.0, 1.0, 1.0});
  binarize(ex, 0.0);
  CHECK(ex.labels == std::vector<double>{1.0, 1.0, 1.0});
  binarize(ex, 1.0 + 1e-9);
  CHECK(ex.labels == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("binarize requires normalized scores") {
  RoutingExample ex = make_example("a", "g", {1.0, 2.0});
  CHECK_THROWS_AS(binarize(ex), ContractError);
}

TEST_CASE("labels are invariant under per-group increasing affine maps") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<RoutingExample> base;
    for (int i = 0; i < 12; ++i) {
      base.push_back(make_example("e" + std::to_string(i),
                                  "g" + std::to_string(i % 3),
                                  {rng.uniform(), rng.uniform(),
                                   rng.uniform()}));
    }
    std::vector<RoutingExample> mapped = base;
    const double scale_by_group[3] = {0.5 + rng.uniform(), 0.5 + rng.uniform(),
                                      0.5 + rng.uniform()};
    const double shift_by_group[3] = {rng.uniform(-5, 5), rng.uniform(-5, 5),
                                      rng.uniform(-5, 5)};
    for (auto& e : mapped) {
      const int g = e.tag.back() - '0';
      for (double& s : e.raw) s = scale_by_group[g] * s + shift_by_group[g];
    }
    normalize_scores(base);
    binarize_all(base);
    normalize_scores(mapped);
    binarize_all(mapped);
    for (size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i].labels == mapped[i].labels);
    }
  }
}

TEST_CASE("filter drops homogeneous verifiable records only") {
  std::vector<RoutingExample> ex = {
      make_example("all-one", "g", {1, 1, 1}),
      make_example("mixed", "g", {1, 0, 1}),
      make_example("all-zero", "g", {0, 0, 0}),
      make_example("open", "g2", {1, 1, 1}, RecordKind::open_ended)};
  for (auto& e : ex) e.labels = e.raw;
  std::vector<RoutingExample> kept = filter_uninformative(ex);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].id == "mixed");
  CHECK(kept[1].id == "open");
}

TEST_CASE("filter never removes heterogeneous records") {
  Rng rng(13);
  std::vector<RoutingExample> ex;
  for (int i = 0; i < 200; ++i) {
    auto e = make_example("e" + std::to_string(i), "g", {0, 0, 0});
    e.labels = {static_cast<double>(rng.below(2)),
                static_cast<double>(rng.below(2)),
                static_cast<double>(rng.below(2))};
    ex.push_back(e);
  }
  std::vector<RoutingExample> kept = filter_uninformative(ex);
  for (const auto& e : ex) {
    bool hetero = false;
    for (double c : e.labels) {
      if (c != e.labels[0]) hetero = true;
    }
    const bool present =
        std::any_of(kept.begin(), kept.end(),
                    [&](const RoutingExample& k) { return k.id == e.id; });
    if (hetero) CHECK(present);
  }
}

TEST_CASE("plan validation rejects broken plans") {
  SpecializationPlan plan = make_plan(3, 3, 0.95, 0.2, 7);
  CHECK_NOTHROW(plan.validate());

  SpecializationPlan dup = plan;
  dup.markers[1][0] = dup.markers[0][0];
  CHECK_THROWS_AS(dup.validate(), ContractError);

  SpecializationPlan flat = plan;
  flat.correctness[2] = {0.4, 0.4, 0.4};
  CHECK_THROWS_AS(flat.validate(), ContractError);

  SpecializationPlan bad_q = plan;
  bad_q.correctness[0][0] = 1.5;
  CHECK_THROWS_AS(bad_q.validate(), ContractError);
}

TEST_CASE("planted argmax: deterministic specialist when Q row is one-hot") {
  SpecializationPlan plan = make_plan(3, 3, 1.0, 0.0, 21);
  CorpusSplit split = generate_synthetic(plan, {300, 0, 0});
  REQUIRE(split.train.size() == 300);
  for (const RoutingExample& ex : split.train) {
    const int domain = ex.tag[3] - '1';  // "dom1" -> 0
    CHECK(ex.oracle_best == domain + 1);
    CHECK(ex.raw[static_cast<size_t>(domain)] == 1.0);
  }
}

TEST_CASE("generator frequencies match the plan within 3 sigma") {
  SpecializationPlan plan = make_plan(3, 3, 0.95, 0.2, 22);
  CorpusSplit split = generate_synthetic(plan, {2000, 0, 0});
  size_t domain_count[3] = {0, 0, 0};
  size_t correct_count[3][3] = {};
  for (const RoutingExample& ex : split.train) {
    const int d = ex.tag[3] - '1';
    ++domain_count[d];
    for (size_t t = 0; t < 3; ++t) {
      if (ex.raw[t] == 1.0) ++correct_count[d][t];
    }
  }
  for (int d = 0; d < 3; ++d) {
    REQUIRE(domain_count[d] > 400);
    for (int t = 0; t < 3; ++t) {
      const double p = plan.correctness[static_cast<size_t>(d)]
                                       [static_cast<size_t>(t)];
      const double n = static_cast<double>(domain_count[d]);
      const double phat =
          static_cast<double>(correct_count[d][t]) / n;
      const double sigma = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(phat - p) <= 3 * sigma);
    }
  }
}

TEST_CASE("generator output is fully populated and consistent") {
  SpecializationPlan plan = make_plan(3, 4, 0.9, 0.1, 23);
  CorpusSplit split = generate_synthetic(plan, {50, 20, 30});
  CHECK(split.train.size() == 50);
  CHECK(split.validation.size() == 20);
  CHECK(split.test.size() == 30);
  std::set<std::string> ids;
  std::vector<const RoutingExample*> all;
  for (const auto& e : split.train) all.push_back(&e);
  for (const auto& e : split.validation) all.push_back(&e);
  for (const auto& e : split.test) all.push_back(&e);
  for (const RoutingExample* e : all) {
    CHECK(ids.insert(e->id).second);
    CHECK(e->responses.size() == 3);
    CHECK(e->normalized.size() == 3);
    CHECK(e->labels.size() == 3);
    // Recorded best model is the raw-score argmax with lowest-index ties.
    size_t best = 0;
    for (size_t t = 1; t < 3; ++t) {
      if (e->raw[t] > e->raw[best]) best = t;
    }
    CHECK(e->oracle_best == static_cast<int>(best) + 1);
    // The query must contain one of its domain's markers.
    const size_t d = static_cast<size_t>(e->tag[3] - '1');
    bool found = false;
    for (const std::string& m : plan.markers[d]) {
      if (e->query.find(m) != std::string::npos) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("open-ended domains get bounded jitter") {
  SpecializationPlan plan = make_plan(2, 2, 0.9, 0.1, 24);
  plan.domain_kinds = {RecordKind::open_ended, RecordKind::verifiable};
  CorpusSplit split = generate_synthetic(plan, {400, 0, 0});
  bool saw_jitter = false;
  for (const RoutingExample& ex : split.train) {
    if (ex.kind != RecordKind::open_ended) continue;
    for (double s : ex.raw) {
      const double frac = s - std::floor(s);
      CHECK(frac <= 0.1);
      if (frac > 0.0) saw_jitter = true;
    }
  }
  CHECK(saw_jitter);
}

TEST_CASE("equal seeds produce byte-identical corpora") {
  SpecializationPlan plan = make_plan(3, 3, 0.95, 0.2, 25);
  CorpusSplit a = generate_synthetic(plan, {100, 20, 20});
  CorpusSplit b = generate_synthetic(plan, {100, 20, 20});
  const std::string pa = temp_path("seed_a.jsonl");
  const std::string pb = temp_path("seed_b.jsonl");
  save_corpus(a.train, pa);
  save_corpus(b.train, pb);
  CHECK(read_file(pa) == read_file(pb));
  CHECK(corpus_digest(pa) == corpus_digest(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("save then load round trips byte-identically") {
  SpecializationPlan plan = make_plan(3, 3, 0.95, 0.2, 26);
  plan.domain_kinds[1] = RecordKind::open_ended;
  CorpusSplit split = generate_synthetic(plan, {60, 0, 0});
  const std::string p1 = temp_path("rt1.jsonl");
  const std::string p2 = temp_path("rt2.jsonl");
  save_corpus(split.train, p1);
  std::vector<RoutingExample> loaded = load_corpus(p1);
  REQUIRE(loaded.size() == split.train.size());
  save_corpus(loaded, p2);
  CHECK(read_file(p1) == read_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("malformed corpus lines name the line and field") {
  const std::string path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"a","tag":"g","kind":"verifiable","query":"q",)"
        << R"("responses":["r","r"],"raw":[1.0,0.0]})" << '\n';
    out << R"({"id":"b","tag":"g","kind":"verifiable","query":"q",)"
        << R"("responses":["r","r","r"],"raw":[1.0,0.0,0.0]})" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"),
                       FormatError);

  {
    std::ofstream out(path);
    out << R"({"id":"a","tag":"g","kind":"verifiable","query":"q",)"
        << R"("responses":["r"]})" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("'raw'"),
                       FormatError);

  {
    std::ofstream out(path);
    out << "not a record" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":1:"),
                       FormatError);
  std::remove(path.c_str());
}

TEST_CASE("empty corpus file loads as an empty corpus") {
  const std::string path = temp_path("empty.jsonl");
  { std::ofstream out(path); }
  CHECK(load_corpus(path).empty());
  std::remove(path.c_str());
}

TEST_CASE("plan files round trip") {
  SpecializationPlan plan = make_plan(4, 3, 0.9, 0.15, 27);
  plan.domain_kinds[2] = RecordKind::open_ended;
  const std::string path = temp_path("plan.json");
  save_plan(plan, path);
  SpecializationPlan loaded = load_plan(path);
  CHECK(loaded.num_models == plan.num_models);
  CHECK(loaded.num_domains == plan.num_domains);
  CHECK(loaded.correctness == plan.correctness);
  CHECK(loaded.markers == plan.markers);
  CHECK(loaded.style_prefixes == plan.style_prefixes);
  CHECK(loaded.seed == plan.seed);
  CHECK(loaded.domain_kinds[2] == RecordKind::open_ended);
  std::remove(path.c_str());
}
