#include "lahr/gateway.hpp"

#include <array>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <utility>

#include "httplib.h"
#include "json.hpp"
#include "lahr/baselines.hpp"
#include "lahr/errors.hpp"
#include "lahr/evalkit.hpp"

namespace lahr {

namespace {

using nlohmann::ordered_json;

// ---- little-endian byte IO --------------------------------------------------

void append_bytes(std::string& out, const void* data, size_t size) {
  out.append(static_cast<const char*>(data), size);
}

template <typename T>
void append_int(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(
        (static_cast<uint64_t>(value) >> (8 * i)) & 0xff);
  }
  append_bytes(out, bytes, sizeof(T));
}

struct ByteReader {
  const std::string& data;
  size_t pos = 0;

  size_t remaining() const { return data.size() - pos; }

  void require(size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated checkpoint: ") + what);
    }
  }

  template <typename T>
  T read_int(const char* what) {
    static_assert(std::is_integral_v<T>);
    require(sizeof(T), what);
    uint64_t value = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<uint64_t>(
                   static_cast<unsigned char>(data[pos + i]))
               << (8 * i);
    }
    pos += sizeof(T);
    return static_cast<T>(value);
  }

  std::string read_string(size_t n, const char* what) {
    require(n, what);
    std::string out = data.substr(pos, n);
    pos += n;
    return out;
  }
};

constexpr char kMagic[4] = {'L', 'A', 'H', 'D'};
constexpr uint16_t kVersion = 1;

std::string encode_tensors(const std::vector<TensorBlob>& tensors) {
  std::string out;
  append_int<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const TensorBlob& blob : tensors) {
    append_int<uint32_t>(out, static_cast<uint32_t>(blob.name.size()));
    out += blob.name;
    append_int<uint32_t>(out, static_cast<uint32_t>(blob.shape.size()));
    for (size_t dim : blob.shape) append_int<uint64_t>(out, dim);
    append_int<uint64_t>(out, blob.data.size());
    for (float v : blob.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      append_int<uint32_t>(out, bits);
    }
    const size_t payload = blob.data.size() * sizeof(float);
    const char* start = out.data() + out.size() - payload;
    append_int<uint32_t>(out, crc32(start, payload));
  }
  return out;
}

std::vector<TensorBlob> decode_tensors(const std::string& payload) {
  ByteReader reader{payload};
  const uint32_t count = reader.read_int<uint32_t>("tensor count");
  std::vector<TensorBlob> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorBlob blob;
    const uint32_t name_len = reader.read_int<uint32_t>("tensor name");
    blob.name = reader.read_string(name_len, "tensor name");
    const uint32_t rank = reader.read_int<uint32_t>("tensor rank");
    size_t expected = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      blob.shape.push_back(reader.read_int<uint64_t>("tensor dims"));
      expected *= blob.shape.back();
    }
    const uint64_t values = reader.read_int<uint64_t>("tensor value count");
    if (rank > 0 && values != expected) {
      throw FormatError("tensor '" + blob.name + "' declares shape for " +
                        std::to_string(expected) + " values but carries " +
                        std::to_string(values));
    }
    reader.require(values * sizeof(float) + sizeof(uint32_t),
                   "tensor payload");
    const char* start = reader.data.data() + reader.pos;
    blob.data.resize(values);
    for (uint64_t v = 0; v < values; ++v) {
      const uint32_t bits = reader.read_int<uint32_t>("tensor payload");
      float value;
      std::memcpy(&value, &bits, sizeof(value));
      blob.data[v] = value;
    }
    const uint32_t stored = reader.read_int<uint32_t>("tensor checksum");
    const uint32_t actual = crc32(start, values * sizeof(float));
    if (stored != actual) {
      throw FormatError("checksum mismatch in tensor '" + blob.name +
                        "': the payload is corrupt");
    }
    tensors.push_back(std::move(blob));
  }
  if (reader.remaining() != 0) {
    throw FormatError("trailing bytes after the tensor table");
  }
  return tensors;
}

// ---- route response bodies ---------------------------------------------------

ordered_json decision_json(const RoutingDecision& decision,
                           const std::string& model_name) {
  ordered_json j;
  j["model"] = model_name;
  j["index"] = decision.selected;
  j["scores"] = decision.scores;
  j["router_latency_ms"] = decision.router_latency_ms;
  return j;
}

std::string error_body(const std::string& message) {
  ordered_json j;
  j["error"] = message;
  return j.dump();
}

}  // namespace

// ---- CRC-32 -------------------------------------------------------------------

uint32_t crc32(const void* data, size_t size) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  const unsigned char* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ bytes[i]) & 0xff] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

// ---- checkpoint files ----------------------------------------------------------

void save_checkpoint_file(const CheckpointData& checkpoint,
                          const std::string& path) {
  std::string out;
  append_bytes(out, kMagic, sizeof(kMagic));
  append_int<uint16_t>(out, kVersion);

  const auto append_section = [&out](const std::string& name,
                                     const std::string& payload) {
    append_int<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    append_int<uint64_t>(out, payload.size());
    out += payload;
  };

  ordered_json meta;
  meta["kind"] = checkpoint.kind;
  meta["seed"] = checkpoint.seed;
  meta["steps"] = checkpoint.steps;
  meta["validation_score"] = checkpoint.validation_score;
  append_section("meta", meta.dump());
  append_section("config", checkpoint.config_json);
  append_section("tensors", encode_tensors(checkpoint.tensors));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing checkpoint to '" + path + "'");
}

CheckpointData load_checkpoint_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());

  ByteReader reader{data};
  const std::string magic = reader.read_string(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("'" + path + "' is not a checkpoint file (bad magic)");
  }
  const uint16_t version = reader.read_int<uint16_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  }

  CheckpointData checkpoint;
  bool saw_meta = false, saw_config = false, saw_tensors = false;
  while (reader.remaining() > 0) {
    const uint32_t name_len = reader.read_int<uint32_t>("section name");
    const std::string name = reader.read_string(name_len, "section name");
    const uint64_t payload_len = reader.read_int<uint64_t>("section length");
    const std::string payload =
        reader.read_string(payload_len, "section payload");
    if (name == "meta") {
      try {
        const ordered_json j = ordered_json::parse(payload);
        checkpoint.kind = j.at("kind").get<std::string>();
        checkpoint.seed = j.at("seed").get<uint64_t>();
        checkpoint.steps = j.at("steps").get<uint64_t>();
        checkpoint.validation_score = j.at("validation_score").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
      }
      saw_meta = true;
    } else if (name == "config") {
      checkpoint.config_json = payload;
      saw_config = true;
    } else if (name == "tensors") {
      checkpoint.tensors = decode_tensors(payload);
      saw_tensors = true;
    }
    // Unknown sections are skipped: the length prefix makes them opaque.
  }
  if (!saw_meta || !saw_config || !saw_tensors) {
    throw FormatError("checkpoint is missing a required section");
  }
  return checkpoint;
}

std::unique_ptr<TrainableRouter> router_from_checkpoint(
    const CheckpointData& checkpoint) {
  std::unique_ptr<TrainableRouter> router;
  const std::string& kind = checkpoint.kind;
  if (kind == "lookahead-clm") {
    router = std::make_unique<ClmRouter>(
        LookaheadConfig::from_json(checkpoint.config_json), 0);
  } else if (kind == "lookahead-mlm") {
    router = std::make_unique<MlmRouter>(
        LookaheadConfig::from_json(checkpoint.config_json), 0);
  } else if (kind == "mlc-clm" || kind == "mlc-mlm") {
    router = std::make_unique<MlcRouter>(
        LookaheadConfig::from_json(checkpoint.config_json), 0);
  } else if (kind == "zooter-clm" || kind == "zooter-mlm") {
    double tau = 0.0;
    try {
      tau = ordered_json::parse(checkpoint.config_json)
                .at("tau")
                .get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad distribution-router config: ") +
                        e.what());
    }
    router = std::make_unique<ZooterRouter>(
        LookaheadConfig::from_json(checkpoint.config_json), tau, 0);
  } else if (kind == "oracle-classifier") {
    router = std::make_unique<OracleResponseClassifier>(
        LookaheadConfig::from_json(checkpoint.config_json), 0);
  } else {
    throw FormatError("unknown router kind '" + kind + "' in checkpoint");
  }
  restore_router(*router, checkpoint);
  return router;
}

// ---- gateway configuration ---------------------------------------------------

void GatewayConfig::validate() const {
  split_listen_address(listen);
  if (checkpoint_path.empty()) {
    throw ContractError("gateway config: checkpoint path is empty");
  }
  if (mode != "route-only" && mode != "route-and-proxy") {
    throw ContractError("gateway config: mode must be 'route-only' or "
                        "'route-and-proxy', got '" + mode + "'");
  }
  if (backends.empty()) {
    throw ContractError("gateway config: no backends configured");
  }
  std::vector<bool> seen(backends.size(), false);
  for (const BackendEntry& b : backends) {
    if (b.index < 1 || b.index > backends.size()) {
      throw ContractError("gateway config: backend index " +
                          std::to_string(b.index) + " outside 1.." +
                          std::to_string(backends.size()));
    }
    if (seen[b.index - 1]) {
      throw ContractError("gateway config: backend index " +
                          std::to_string(b.index) + " appears twice");
    }
    seen[b.index - 1] = true;
    if (b.name.empty()) {
      throw ContractError("gateway config: backend " +
                          std::to_string(b.index) + " has no name");
    }
    if (b.base_url.empty()) {
      throw ContractError("gateway config: backend '" + b.name +
                          "' has no base_url");
    }
    if (b.timeout_ms == 0) {
      throw ContractError("gateway config: backend '" + b.name +
                          "' has a zero timeout");
    }
  }
}

std::string GatewayConfig::to_json() const {
  ordered_json j;
  j["listen"] = listen;
  j["checkpoint"] = checkpoint_path;
  j["mode"] = mode;
  j["backends"] = ordered_json::array();
  for (const BackendEntry& b : backends) {
    ordered_json e;
    e["index"] = b.index;
    e["name"] = b.name;
    e["base_url"] = b.base_url;
    e["timeout_ms"] = b.timeout_ms;
    j["backends"].push_back(e);
  }
  return j.dump(2);
}

GatewayConfig GatewayConfig::from_json(const std::string& text) {
  GatewayConfig config;
  try {
    const ordered_json j = ordered_json::parse(text);
    config.listen = j.at("listen").get<std::string>();
    config.checkpoint_path = j.at("checkpoint").get<std::string>();
    config.mode = j.value("mode", std::string("route-only"));
    for (const ordered_json& e : j.at("backends")) {
      BackendEntry b;
      b.index = e.at("index").get<size_t>();
      b.name = e.at("name").get<std::string>();
      b.base_url = e.at("base_url").get<std::string>();
      b.timeout_ms = e.value("timeout_ms", size_t{5000});
      config.backends.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad gateway config: ") + e.what());
  }
  config.validate();
  return config;
}

GatewayConfig load_gateway_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open gateway config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());
  return GatewayConfig::from_json(text);
}

void apply_listen_override(GatewayConfig& config) {
  if (const char* value = std::getenv("LAHR_LISTEN")) {
    if (*value != '\0') {
      split_listen_address(value);  // reject garbage before applying
      config.listen = value;
    }
  }
}

std::pair<std::string, int> split_listen_address(const std::string& listen) {
  const size_t colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0 ||
      colon + 1 == listen.size()) {
    throw FormatError("listen address '" + listen +
                      "' is not of the form host:port");
  }
  const std::string host = listen.substr(0, colon);
  const std::string port_text = listen.substr(colon + 1);
  int port = 0;
  for (char c : port_text) {
    if (c < '0' || c > '9') {
      throw FormatError("listen address '" + listen +
                        "' has a non-numeric port");
    }
    port = port * 10 + (c - '0');
    if (port > 65535) {
      throw FormatError("listen address '" + listen +
                        "' has an out-of-range port");
    }
  }
  return {host, port};
}

// ---- gateway ---------------------------------------------------------------------

struct Gateway::Http {
  httplib::Server server;
};

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {
  config_.validate();
  checkpoint_ = load_checkpoint_file(config_.checkpoint_path);
  router_ = router_from_checkpoint(checkpoint_);
  if (config_.backends.size() != router_->num_models()) {
    throw ContractError(
        "gateway config lists " + std::to_string(config_.backends.size()) +
        " backends but the checkpoint routes " +
        std::to_string(router_->num_models()) + " models");
  }
  counts_ = std::make_unique<std::atomic<uint64_t>[]>(router_->num_models());
  for (size_t t = 0; t < router_->num_models(); ++t) counts_[t] = 0;
  http_ = std::make_unique<Http>();
}

Gateway::~Gateway() { stop(); }

uint64_t Gateway::total_routed() const {
  uint64_t total = 0;
  for (size_t t = 0; t < router_->num_models(); ++t) {
    total += counts_[t].load();
  }
  return total;
}

std::vector<uint64_t> Gateway::selection_counts() const {
  std::vector<uint64_t> counts(router_->num_models());
  for (size_t t = 0; t < counts.size(); ++t) counts[t] = counts_[t].load();
  return counts;
}

namespace {

// Extracts the "query" field or fills `error` with a field diagnostic.
bool parse_query_body(const std::string& body, std::string& query,
                      std::string& error) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    error = std::string("body is not valid JSON: ") + e.what();
    return false;
  }
  if (!j.is_object()) {
    error = "body must be a JSON object with a 'query' field";
    return false;
  }
  if (!j.contains("query")) {
    error = "missing required field 'query'";
    return false;
  }
  if (!j.at("query").is_string()) {
    error = "field 'query' must be a string";
    return false;
  }
  query = j.at("query").get<std::string>();
  return true;
}

}  // namespace

std::string Gateway::handle_route(const std::string& body, int& status) {
  std::string query, error;
  if (!parse_query_body(body, query, error)) {
    status = 400;
    return error_body(error);
  }
  RoutingDecision decision;
  try {
    decision = router_->route(query);
  } catch (const std::exception& e) {
    status = 400;
    return error_body(std::string("routing failed: ") + e.what());
  }
  counts_[static_cast<size_t>(decision.selected - 1)].fetch_add(1);
  const BackendEntry* backend = nullptr;
  for (const BackendEntry& b : config_.backends) {
    if (b.index == static_cast<size_t>(decision.selected)) backend = &b;
  }
  status = 200;
  return decision_json(decision, backend->name).dump();
}

std::string Gateway::handle_generate(const std::string& body, int& status) {
  std::string query, error;
  if (!parse_query_body(body, query, error)) {
    status = 400;
    return error_body(error);
  }
  if (config_.mode != "route-and-proxy") {
    status = 400;
    return error_body("this gateway runs route-only; use /route");
  }
  RoutingDecision decision;
  try {
    decision = router_->route(query);
  } catch (const std::exception& e) {
    status = 400;
    return error_body(std::string("routing failed: ") + e.what());
  }
  counts_[static_cast<size_t>(decision.selected - 1)].fetch_add(1);

  // The backend entry for the selected model. validate() pinned index
  // uniqueness, not ordering, so search by index.
  const BackendEntry* backend = nullptr;
  for (const BackendEntry& b : config_.backends) {
    if (b.index == static_cast<size_t>(decision.selected)) backend = &b;
  }
  ordered_json response = decision_json(decision, backend->name);

  const auto started = std::chrono::steady_clock::now();
  httplib::Client client(backend->base_url);
  const auto timeout = std::chrono::milliseconds(backend->timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  ordered_json request;
  request["prompt"] = query;
  const httplib::Result result =
      client.Post("/complete", request.dump(), "application/json");
  const double backend_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - started)
          .count();

  // Proxy failures never alter the routing decision already recorded.
  if (!result) {
    status = 504;
    response["error"] = "backend '" + backend->name + "' unreachable or "
                        "timed out (" + httplib::to_string(result.error()) +
                        ")";
    response["backend_latency_ms"] = backend_ms;
    return response.dump();
  }
  if (result->status != 200) {
    status = 502;
    response["error"] = "backend '" + backend->name + "' answered status " +
                        std::to_string(result->status);
    response["backend_latency_ms"] = backend_ms;
    return response.dump();
  }
  try {
    const ordered_json payload = ordered_json::parse(result->body);
    response["text"] = payload.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    status = 502;
    response["error"] = std::string("backend '") + backend->name +
                        "' returned an unparsable completion: " + e.what();
    response["backend_latency_ms"] = backend_ms;
    return response.dump();
  }
  response["backend_latency_ms"] = backend_ms;
  status = 200;
  return response.dump();
}

std::string Gateway::handle_healthz(int& status) const {
  ordered_json j;
  j["status"] = "ok";
  j["kind"] = checkpoint_.kind;
  j["num_models"] = router_->num_models();
  j["steps"] = checkpoint_.steps;
  j["validation_score"] = checkpoint_.validation_score;
  j["mode"] = config_.mode;
  status = 200;
  return j.dump();
}

std::string Gateway::handle_stats(int& status) const {
  ordered_json j;
  j["total"] = total_routed();
  j["counts"] = selection_counts();
  ordered_json names = ordered_json::array();
  std::vector<std::string> by_index(config_.backends.size());
  for (const BackendEntry& b : config_.backends) {
    by_index[b.index - 1] = b.name;
  }
  for (const std::string& name : by_index) names.push_back(name);
  j["models"] = names;
  status = 200;
  return j.dump();
}

void Gateway::start() {
  if (running_) throw ContractError("gateway already started");
  auto [host, port] = split_listen_address(config_.listen);

  http_->server.Post("/route", [this](const httplib::Request& req,
                                      httplib::Response& res) {
    int status = 500;
    const std::string body = handle_route(req.body, status);
    res.status = status;
    res.set_content(body, "application/json");
  });
  http_->server.Post("/generate", [this](const httplib::Request& req,
                                         httplib::Response& res) {
    int status = 500;
    const std::string body = handle_generate(req.body, status);
    res.status = status;
    res.set_content(body, "application/json");
  });
  http_->server.Get("/healthz", [this](const httplib::Request&,
                                       httplib::Response& res) {
    int status = 500;
    const std::string body = handle_healthz(status);
    res.status = status;
    res.set_content(body, "application/json");
  });
  http_->server.Get("/stats", [this](const httplib::Request&,
                                     httplib::Response& res) {
    int status = 500;
    const std::string body = handle_stats(status);
    res.status = status;
    res.set_content(body, "application/json");
  });

  if (port == 0) {
    port_ = http_->server.bind_to_any_port(host);
    if (port_ <= 0) throw IoError("cannot bind gateway to " + host);
  } else {
    if (!http_->server.bind_to_port(host, port)) {
      throw IoError("cannot bind gateway to " + config_.listen);
    }
    port_ = port;
  }
  serve_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  running_ = true;
}

void Gateway::stop() {
  if (!running_) return;
  http_->server.stop();
  if (serve_thread_.joinable()) serve_thread_.join();
  running_ = false;
}

void Gateway::wait() {
  if (serve_thread_.joinable()) serve_thread_.join();
}

// ---- mock backend ------------------------------------------------------------

struct MockBackend::Http {
  httplib::Server server;
};

MockBackend::MockBackend(std::string model_name, std::string canned_text,
                         size_t delay_ms)
    : model_name_(std::move(model_name)),
      canned_text_(std::move(canned_text)),
      delay_ms_(delay_ms),
      http_(std::make_unique<Http>()) {}

MockBackend::~MockBackend() { stop(); }

std::string MockBackend::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

void MockBackend::start() {
  if (running_) throw ContractError("mock backend already started");
  http_->server.Post("/complete", [this](const httplib::Request& req,
                                         httplib::Response& res) {
    requests_.fetch_add(1);
    if (delay_ms_ > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    }
    ordered_json request;
    try {
      request = ordered_json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(error_body("body is not valid JSON"),
                      "application/json");
      return;
    }
    if (!request.contains("prompt") || !request.at("prompt").is_string()) {
      res.status = 400;
      res.set_content(error_body("missing required field 'prompt'"),
                      "application/json");
      return;
    }
    ordered_json response;
    response["text"] = canned_text_ + " [" + model_name_ + "]";
    res.status = 200;
    res.set_content(response.dump(), "application/json");
  });
  port_ = http_->server.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw IoError("cannot bind mock backend");
  serve_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  running_ = true;
}

void MockBackend::stop() {
  if (!running_) return;
  http_->server.stop();
  if (serve_thread_.joinable()) serve_thread_.join();
  running_ = false;
}

}  // namespace lahr
