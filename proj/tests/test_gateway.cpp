#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "lahr/baselines.hpp"
#include "lahr/corpus.hpp"
#include "lahr/gateway.hpp"

using namespace lahr;
using nlohmann::ordered_json;

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

LookaheadConfig tiny_config(size_t T) {
  LookaheadConfig cfg = default_mlm_config(T);
  cfg.lambda = 0.0;
  cfg.m = 8;
  cfg.backbone = tiny_backbone();
  cfg.max_query_bytes = 24;
  return cfg;
}

// Gives the zero-initialized output head nonzero weights so routing scores
// actually depend on the query.
void perturb_head(TrainableRouter& router, uint64_t seed) {
  Rng rng(seed);
  for (NamedTensor& np : router.named_parameters()) {
    if (np.name == "mlp.w2" || np.name == "mlp.b2") {
      for (double& v : np.tensor.mutable_values()) v = rng.normal(0.0, 0.5);
    }
  }
}

CheckpointData make_checkpoint(uint64_t seed = 11) {
  MlcRouter router(tiny_config(3), seed);
  perturb_head(router, seed ^ 0xbeef);
  return snapshot_router(router, seed, 42, 0.75);
}

std::string write_checkpoint_file(const CheckpointData& ckpt,
                                  const std::string& name) {
  save_checkpoint_file(ckpt, name);
  return name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

GatewayConfig three_backend_config(const std::string& checkpoint_path) {
  GatewayConfig config;
  config.listen = "127.0.0.1:0";
  config.checkpoint_path = checkpoint_path;
  config.mode = "route-only";
  for (size_t t = 1; t <= 3; ++t) {
    BackendEntry b;
    b.index = t;
    b.name = "model-" + std::to_string(t);
    b.base_url = "http://127.0.0.1:1";  // never called in route-only mode
    b.timeout_ms = 200;
    config.backends.push_back(b);
  }
  return config;
}

}  // namespace

TEST_CASE("crc32 known answers") {
  const std::string check = "123456789";
  CHECK(crc32(check.data(), check.size()) == 0xCBF43926u);
  CHECK(crc32(nullptr, 0) == 0u);
  const std::string a = "abc", b = "abd";
  CHECK(crc32(a.data(), a.size()) != crc32(b.data(), b.size()));
}

TEST_CASE("checkpoint file round trip") {
  const CheckpointData original = make_checkpoint();
  const std::string path = "ckpt_roundtrip.lahd";
  save_checkpoint_file(original, path);

  const CheckpointData loaded = load_checkpoint_file(path);
  CHECK(loaded.kind == original.kind);
  CHECK(loaded.config_json == original.config_json);
  CHECK(loaded.seed == original.seed);
  CHECK(loaded.steps == original.steps);
  CHECK(loaded.validation_score == original.validation_score);
  REQUIRE(loaded.tensors.size() == original.tensors.size());
  for (size_t i = 0; i < loaded.tensors.size(); ++i) {
    CHECK(loaded.tensors[i].name == original.tensors[i].name);
    CHECK(loaded.tensors[i].shape == original.tensors[i].shape);
    CHECK(loaded.tensors[i].data == original.tensors[i].data);  // bit-exact
  }

  SUBCASE("serialization is deterministic") {
    const std::string again = "ckpt_again.lahd";
    save_checkpoint_file(loaded, again);
    CHECK(read_file(path) == read_file(again));
    std::remove(again.c_str());
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint load failures are distinct and loud") {
  const CheckpointData ckpt = make_checkpoint();
  const std::string path = "ckpt_corrupt.lahd";
  save_checkpoint_file(ckpt, path);
  const std::string good = read_file(path);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint_file("no_such_file.lahd"), IoError);
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    write_file(path, bad);
    CHECK_THROWS_WITH_AS(load_checkpoint_file(path),
                         doctest::Contains("bad magic"), FormatError);
  }
  SUBCASE("unsupported version") {
    std::string bad = good;
    bad[4] = 99;
    write_file(path, bad);
    CHECK_THROWS_WITH_AS(load_checkpoint_file(path),
                         doctest::Contains("unsupported checkpoint version"),
                         FormatError);
  }
  SUBCASE("truncated payload") {
    write_file(path, good.substr(0, good.size() - 10));
    CHECK_THROWS_WITH_AS(load_checkpoint_file(path),
                         doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("one corrupted payload byte never misroutes silently") {
    // The file ends with the last tensor's float payload + its checksum;
    // flipping a byte a little before the checksum corrupts the payload.
    std::string bad = good;
    bad[bad.size() - 9] = static_cast<char>(bad[bad.size() - 9] ^ 0x40);
    write_file(path, bad);
    CHECK_THROWS_WITH_AS(load_checkpoint_file(path),
                         doctest::Contains("checksum mismatch"), FormatError);
  }
  SUBCASE("shape and payload disagreement") {
    CheckpointData mangled = ckpt;
    mangled.tensors[0].shape = {2, 2};
    mangled.tensors[0].data.assign(3, 0.0f);
    save_checkpoint_file(mangled, path);
    CHECK_THROWS_WITH_AS(load_checkpoint_file(path),
                         doctest::Contains("declares shape"), FormatError);
  }
  SUBCASE("missing section") {
    // Header + meta section only.
    std::string bad = good.substr(0, 6);
    const std::string meta = "meta";
    uint32_t len = 4;
    bad.append(reinterpret_cast<const char*>(&len), 4);
    bad += meta;
    uint64_t payload_len = 2;
    bad.append(reinterpret_cast<const char*>(&payload_len), 8);
    bad += "{}";
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint_file(path), FormatError);
  }
  std::remove(path.c_str());
}

TEST_CASE("router_from_checkpoint rebuilds every trainable kind") {
  const std::vector<std::string> queries = {"math: integrate",
                                            "please write code", "hello"};

  SUBCASE("mlc") {
    MlcRouter router(tiny_config(3), 5);
    perturb_head(router, 99);
    CheckpointData ckpt = snapshot_router(router, 5, 10, 0.5);
    restore_router(router, ckpt);  // narrow the in-memory copy to 32-bit

    const std::string path = "ckpt_mlc.lahd";
    save_checkpoint_file(ckpt, path);
    auto rebuilt = router_from_checkpoint(load_checkpoint_file(path));
    CHECK(rebuilt->kind() == "mlc-mlm");
    CHECK(rebuilt->num_models() == 3);
    for (const std::string& q : queries) {
      const RoutingDecision a = router.route(q);
      const RoutingDecision b = rebuilt->route(q);
      CHECK(a.selected == b.selected);
      CHECK(a.scores == b.scores);  // bit-exact at 32-bit
    }
    std::remove(path.c_str());
  }

  SUBCASE("lookahead mlm") {
    LookaheadConfig cfg = tiny_config(2);
    cfg.lambda = 0.2;
    MlmRouter router(cfg, 6);
    perturb_head(router, 100);
    CheckpointData ckpt = snapshot_router(router, 6, 10, 0.5);
    restore_router(router, ckpt);
    const std::string path = "ckpt_mlm.lahd";
    save_checkpoint_file(ckpt, path);
    auto rebuilt = router_from_checkpoint(load_checkpoint_file(path));
    CHECK(rebuilt->kind() == "lookahead-mlm");
    for (const std::string& q : queries) {
      CHECK(router.route(q).scores == rebuilt->route(q).scores);
    }
    std::remove(path.c_str());
  }

  SUBCASE("zooter keeps its temperature") {
    ZooterRouter router(tiny_config(3), 0.37, 7);
    perturb_head(router, 101);
    CheckpointData ckpt = snapshot_router(router, 7, 10, 0.5);
    restore_router(router, ckpt);
    const std::string path = "ckpt_zooter.lahd";
    save_checkpoint_file(ckpt, path);
    auto rebuilt = router_from_checkpoint(load_checkpoint_file(path));
    CHECK(rebuilt->kind() == "zooter-mlm");
    auto* zooter = dynamic_cast<ZooterRouter*>(rebuilt.get());
    REQUIRE(zooter != nullptr);
    CHECK(zooter->tau() == 0.37);
    for (const std::string& q : queries) {
      CHECK(router.route(q).scores == rebuilt->route(q).scores);
    }
    std::remove(path.c_str());
  }

  SUBCASE("unknown kind") {
    CheckpointData ckpt = make_checkpoint();
    ckpt.kind = "galactic";
    CHECK_THROWS_WITH_AS(router_from_checkpoint(ckpt),
                         doctest::Contains("unknown router kind"),
                         FormatError);
  }
}

TEST_CASE("gateway config parsing and validation") {
  GatewayConfig config = three_backend_config("router.lahd");
  config.validate();

  SUBCASE("json round trip") {
    const GatewayConfig parsed = GatewayConfig::from_json(config.to_json());
    CHECK(parsed.listen == config.listen);
    CHECK(parsed.checkpoint_path == config.checkpoint_path);
    CHECK(parsed.mode == config.mode);
    REQUIRE(parsed.backends.size() == 3);
    CHECK(parsed.backends[1].name == "model-2");
    CHECK(parsed.backends[1].timeout_ms == 200);
  }

  SUBCASE("invariants") {
    GatewayConfig bad = config;
    bad.backends[2].index = 2;  // duplicate
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("appears twice"),
                         ContractError);
    bad = config;
    bad.backends[0].index = 4;  // outside 1..3
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("outside"),
                         ContractError);
    bad = config;
    bad.backends.clear();
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = config;
    bad.mode = "turbo";
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = config;
    bad.backends[1].timeout_ms = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = config;
    bad.listen = "no-port";
    CHECK_THROWS_AS(bad.validate(), FormatError);
  }

  SUBCASE("listen address parsing") {
    const auto [host, port] = split_listen_address("127.0.0.1:8080");
    CHECK(host == "127.0.0.1");
    CHECK(port == 8080);
    CHECK(split_listen_address("localhost:0").second == 0);
    CHECK_THROWS_AS(split_listen_address("nohost"), FormatError);
    CHECK_THROWS_AS(split_listen_address(":80"), FormatError);
    CHECK_THROWS_AS(split_listen_address("h:"), FormatError);
    CHECK_THROWS_AS(split_listen_address("h:12ab"), FormatError);
    CHECK_THROWS_AS(split_listen_address("h:70000"), FormatError);
  }

  SUBCASE("environment override") {
    GatewayConfig overridden = config;
    setenv("LAHR_LISTEN", "0.0.0.0:9177", 1);
    apply_listen_override(overridden);
    CHECK(overridden.listen == "0.0.0.0:9177");
    setenv("LAHR_LISTEN", "garbage", 1);
    CHECK_THROWS_AS(apply_listen_override(overridden), FormatError);
    unsetenv("LAHR_LISTEN");
    GatewayConfig untouched = config;
    apply_listen_override(untouched);
    CHECK(untouched.listen == config.listen);
  }
}

TEST_CASE("gateway handlers without HTTP") {
  const std::string path = "ckpt_gateway.lahd";
  write_checkpoint_file(make_checkpoint(), path);
  Gateway gateway(three_backend_config(path));

  SUBCASE("startup errors") {
    GatewayConfig short_config = three_backend_config(path);
    short_config.backends.pop_back();
    short_config.backends[0].index = 1;
    short_config.backends[1].index = 2;
    CHECK_THROWS_WITH_AS((Gateway{short_config}),
                         doctest::Contains("2 backends"), ContractError);
  }

  SUBCASE("route happy path") {
    int status = 0;
    const std::string body =
        gateway.handle_route(R"({"query": "solve this equation"})", status);
    CHECK(status == 200);
    const ordered_json j = ordered_json::parse(body);
    CHECK(j.at("index").is_number_integer());
    const int index = j.at("index").get<int>();
    CHECK(index >= 1);
    CHECK(index <= 3);
    CHECK(j.at("model") == "model-" + std::to_string(index));
    CHECK(j.at("scores").size() == 3);
    CHECK(j.at("router_latency_ms").get<double>() >= 0.0);
    CHECK(gateway.total_routed() == 1);
  }

  SUBCASE("field diagnostics") {
    int status = 0;
    std::string body = gateway.handle_route("not json at all", status);
    CHECK(status == 400);
    CHECK(ordered_json::parse(body).at("error").get<std::string>().find(
              "not valid JSON") != std::string::npos);

    body = gateway.handle_route(R"({"prompt": "wrong field"})", status);
    CHECK(status == 400);
    CHECK(ordered_json::parse(body).at("error") ==
          "missing required field 'query'");

    body = gateway.handle_route(R"({"query": 17})", status);
    CHECK(status == 400);
    CHECK(ordered_json::parse(body).at("error") ==
          "field 'query' must be a string");

    body = gateway.handle_route(R"(["query"])", status);
    CHECK(status == 400);
    CHECK(gateway.total_routed() == 0);  // failed requests never count
  }

  SUBCASE("generate requires proxy mode") {
    int status = 0;
    const std::string body =
        gateway.handle_generate(R"({"query": "hi"})", status);
    CHECK(status == 400);
    CHECK(ordered_json::parse(body).at("error").get<std::string>().find(
              "route-only") != std::string::npos);
  }

  SUBCASE("healthz and stats") {
    int status = 0;
    const ordered_json health =
        ordered_json::parse(gateway.handle_healthz(status));
    CHECK(status == 200);
    CHECK(health.at("status") == "ok");
    CHECK(health.at("kind") == "mlc-mlm");
    CHECK(health.at("num_models") == 3);
    CHECK(health.at("steps") == 42);
    CHECK(health.at("mode") == "route-only");

    gateway.handle_route(R"({"query": "alpha"})", status);
    gateway.handle_route(R"({"query": "beta"})", status);
    const ordered_json stats =
        ordered_json::parse(gateway.handle_stats(status));
    CHECK(status == 200);
    CHECK(stats.at("total") == 2);
    uint64_t sum = 0;
    for (const auto& c : stats.at("counts")) sum += c.get<uint64_t>();
    CHECK(sum == 2);
    CHECK(stats.at("models").size() == 3);
    CHECK(stats.at("models")[0] == "model-1");
  }

  std::remove(path.c_str());
}

TEST_CASE("gateway over HTTP with concurrency") {
  const std::string path = "ckpt_http.lahd";
  write_checkpoint_file(make_checkpoint(), path);
  Gateway gateway(three_backend_config(path));
  gateway.start();
  REQUIRE(gateway.port() > 0);
  httplib::Client client("http://127.0.0.1:" + std::to_string(gateway.port()));

  SUBCASE("basic round trips") {
    auto res = client.Post("/route", R"({"query": "hello there"})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const ordered_json j = ordered_json::parse(res->body);
    CHECK(j.at("scores").size() == 3);

    auto health = client.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(ordered_json::parse(health->body).at("status") == "ok");

    auto bad = client.Post("/route", R"({"query": 3})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
  }

  SUBCASE("64 concurrent identical requests") {
    const uint64_t before = gateway.total_routed();
    constexpr size_t kThreads = 64;
    std::vector<std::string> bodies(kThreads);
    std::vector<int> statuses(kThreads, 0);
    std::vector<std::thread> threads;
    threads.reserve(kThreads);
    for (size_t i = 0; i < kThreads; ++i) {
      threads.emplace_back([&, i] {
        for (int attempt = 0; attempt < 8; ++attempt) {
          httplib::Client c("http://127.0.0.1:" +
                            std::to_string(gateway.port()));
          auto res = c.Post("/route", R"({"query": "the same question"})",
                            "application/json");
          if (res) {
            statuses[i] = res->status;
            bodies[i] = res->body;
            return;
          }
          // Only a refused connection is safe to retry: the request was
          // never sent, so it cannot have been counted.
          if (res.error() != httplib::Error::Connection) return;
          std::this_thread::sleep_for(
              std::chrono::milliseconds(5 * (attempt + 1)));
        }
      });
    }
    for (std::thread& t : threads) t.join();

    ordered_json first = ordered_json::parse(bodies[0]);
    for (size_t i = 0; i < kThreads; ++i) {
      CHECK(statuses[i] == 200);
      const ordered_json j = ordered_json::parse(bodies[i]);
      CHECK(j.at("index") == first.at("index"));
      CHECK(j.at("model") == first.at("model"));
      CHECK(j.at("scores") == first.at("scores"));
    }
    CHECK(gateway.total_routed() == before + kThreads);

    auto stats = client.Get("/stats");
    REQUIRE(stats);
    const ordered_json j = ordered_json::parse(stats->body);
    uint64_t sum = 0;
    for (const auto& c : j.at("counts")) sum += c.get<uint64_t>();
    CHECK(j.at("total") == sum);
  }

  gateway.stop();
  std::remove(path.c_str());
}

TEST_CASE("mock backend and proxy mode") {
  MockBackend fast("atlas", "canned completion", 0);
  fast.start();

  SUBCASE("mock serves deterministic completions naming its model") {
    httplib::Client client(fast.base_url());
    auto res = client.Post("/complete", R"({"prompt": "2+2?"})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const ordered_json j = ordered_json::parse(res->body);
    CHECK(j.at("text").get<std::string>().find("atlas") !=
          std::string::npos);
    CHECK(j.at("text").get<std::string>().find("canned completion") !=
          std::string::npos);
    auto again = client.Post("/complete", R"({"prompt": "2+2?"})",
                             "application/json");
    REQUIRE(again);
    CHECK(again->body == res->body);
    CHECK(fast.request_count() == 2);

    auto bad = client.Post("/complete", R"({"no": 1})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
  }

  SUBCASE("artificial delay is honored") {
    MockBackend slow("tortoise", "eventually", 150);
    slow.start();
    httplib::Client client(slow.base_url());
    const auto begin = std::chrono::steady_clock::now();
    auto res = client.Post("/complete", R"({"prompt": "?"})",
                           "application/json");
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - begin)
                          .count();
    REQUIRE(res);
    CHECK(ms >= 150.0);
    slow.stop();
  }

  SUBCASE("generate proxies to the selected backend") {
    const std::string path = "ckpt_proxy.lahd";
    write_checkpoint_file(make_checkpoint(), path);

    MockBackend b2("bravo", "second answer", 0);
    MockBackend b3("carol", "third answer", 0);
    b2.start();
    b3.start();

    GatewayConfig config = three_backend_config(path);
    config.mode = "route-and-proxy";
    config.backends[0].base_url = fast.base_url();
    config.backends[0].name = "atlas";
    config.backends[1].base_url = b2.base_url();
    config.backends[1].name = "bravo";
    config.backends[2].base_url = b3.base_url();
    config.backends[2].name = "carol";

    Gateway gateway(config);
    int status = 0;
    const std::string body =
        gateway.handle_generate(R"({"query": "route me"})", status);
    CHECK(status == 200);
    const ordered_json j = ordered_json::parse(body);
    const int index = j.at("index").get<int>();
    const std::string name = j.at("model").get<std::string>();
    CHECK(j.at("text").get<std::string>().find(name) != std::string::npos);
    CHECK(j.at("backend_latency_ms").get<double>() >= 0.0);
    CHECK(gateway.total_routed() == 1);

    // The same decision over HTTP.
    gateway.start();
    httplib::Client client("http://127.0.0.1:" +
                           std::to_string(gateway.port()));
    auto res = client.Post("/generate", R"({"query": "route me"})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(ordered_json::parse(res->body).at("index") == index);
    gateway.stop();

    std::remove(path.c_str());
  }

  SUBCASE("backend timeout yields 504 that still carries the decision") {
    const std::string path = "ckpt_timeout.lahd";
    write_checkpoint_file(make_checkpoint(), path);

    MockBackend sluggish("sloth", "too late", 400);
    sluggish.start();

    GatewayConfig config = three_backend_config(path);
    config.mode = "route-and-proxy";
    for (BackendEntry& b : config.backends) {
      b.base_url = sluggish.base_url();
      b.timeout_ms = 50;  // far below the 400 ms delay
    }
    Gateway gateway(config);
    int status = 0;
    const std::string body =
        gateway.handle_generate(R"({"query": "anything"})", status);
    CHECK(status == 504);
    const ordered_json j = ordered_json::parse(body);
    CHECK(j.at("index").get<int>() >= 1);   // decision is still reported
    CHECK(j.at("scores").size() == 3);
    CHECK(j.at("error").get<std::string>().find("unreachable or timed out") !=
          std::string::npos);
    CHECK(gateway.total_routed() == 1);  // routing itself succeeded
    sluggish.stop();
    std::remove(path.c_str());
  }

  SUBCASE("killed backend surfaces as a 504-class failure") {
    const std::string path = "ckpt_dead.lahd";
    write_checkpoint_file(make_checkpoint(), path);

    MockBackend doomed("ghost", "never seen", 0);
    doomed.start();
    const std::string dead_url = doomed.base_url();
    doomed.stop();  // kill it before the gateway calls out

    GatewayConfig config = three_backend_config(path);
    config.mode = "route-and-proxy";
    for (BackendEntry& b : config.backends) b.base_url = dead_url;
    Gateway gateway(config);
    int status = 0;
    const std::string body =
        gateway.handle_generate(R"({"query": "hello?"})", status);
    CHECK(status == 504);
    CHECK(ordered_json::parse(body).at("index").get<int>() >= 1);
    std::remove(path.c_str());
  }

  fast.stop();
}
