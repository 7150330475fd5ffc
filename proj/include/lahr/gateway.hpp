#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "lahr/checkpoint.hpp"
#include "lahr/lookahead.hpp"
#include "lahr/router.hpp"

namespace lahr {

// ---- Checkpoint files -----------------------------------------------------
//
// Binary layout (all integers little-endian):
//   magic "LAHD" | version u16 | sections...
//   section  := u32 name length | name bytes | u64 payload length | payload
// Known sections: "meta" (JSON: kind, seed, steps, validation_score),
// "config" (the router's configuration record verbatim), "tensors":
//   u32 tensor count, then per tensor:
//     u32 name length | name | u32 rank | u64 dims... |
//     u64 value count | f32 values... | u32 crc32 of the value bytes
// Unknown sections are skipped; a bad magic, unsupported version, truncated
// payload, checksum mismatch, or shape/count disagreement each raise a
// FormatError naming the failure. Unreadable files raise IoError.

// CRC-32 (reflected 0xEDB88320 polynomial, as in zip/png).
uint32_t crc32(const void* data, size_t size);

void save_checkpoint_file(const CheckpointData& checkpoint,
                          const std::string& path);
CheckpointData load_checkpoint_file(const std::string& path);

// Rebuilds a router of checkpoint.kind ("lookahead-clm", "lookahead-mlm",
// "mlc-*", "zooter-*", "oracle-classifier") and restores its weights.
// Unknown kinds raise FormatError.
std::unique_ptr<TrainableRouter> router_from_checkpoint(
    const CheckpointData& checkpoint);

// ---- Gateway configuration --------------------------------------------------

struct BackendEntry {
  size_t index = 0;  // 1-based model index
  std::string name;
  std::string base_url;      // e.g. "http://127.0.0.1:9001"
  size_t timeout_ms = 5000;  // connection + read timeout for proxy calls
};

// Structured text (JSON object) on disk:
//   {"listen": "127.0.0.1:8080", "checkpoint": "router.lahd",
//    "mode": "route-only" | "route-and-proxy",
//    "backends": [{"index":1,"name":...,"base_url":...,"timeout_ms":...}]}
struct GatewayConfig {
  std::string listen = "127.0.0.1:8080";
  std::string checkpoint_path;
  std::string mode = "route-only";
  std::vector<BackendEntry> backends;

  // Indices must cover 1..T exactly once; entries complete; mode known.
  void validate() const;
  std::string to_json() const;
  static GatewayConfig from_json(const std::string& text);
};

GatewayConfig load_gateway_config(const std::string& path);

// Replaces config.listen with $LAHR_LISTEN when that variable is set.
void apply_listen_override(GatewayConfig& config);

// "host:port" -> pair; throws FormatError on anything unparsable.
std::pair<std::string, int> split_listen_address(const std::string& listen);

// ---- HTTP gateway ----------------------------------------------------------
//
// POST /route    {"query": text} -> {"model", "index", "scores",
//                                    "router_latency_ms"}
// POST /generate as /route plus {"text", "backend_latency_ms"} from the
//                selected backend's completion endpoint
//                (POST <base_url>/complete {"prompt"} -> {"text"})
// GET  /healthz  status + checkpoint metadata
// GET  /stats    per-model selection counts since start
//
// The router is immutable shared state; routing is reentrant, counters are
// atomic. Backend failures yield a 504-class body that still carries the
// routing decision. Malformed bodies yield 400 with a field diagnostic.
class Gateway {
 public:
  // Loads the checkpoint, rebuilds the router, and checks the backend list
  // against it. Throws on any startup inconsistency.
  explicit Gateway(GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds (an ephemeral port when the address says ":0"), then serves on a
  // background thread; returns once the listener is ready.
  void start();
  void stop();
  // Blocks until stop() is called from another thread (used by the CLI).
  void wait();

  int port() const { return port_; }
  const GatewayConfig& config() const { return config_; }
  const Router& router() const { return *router_; }

  uint64_t total_routed() const;
  std::vector<uint64_t> selection_counts() const;

  // HTTP-free handler cores, exposed for direct testing. Each returns the
  // response body and sets `status`.
  std::string handle_route(const std::string& body, int& status);
  std::string handle_generate(const std::string& body, int& status);
  std::string handle_healthz(int& status) const;
  std::string handle_stats(int& status) const;

 private:
  struct Http;  // holds the httplib server

  GatewayConfig config_;
  CheckpointData checkpoint_;
  std::unique_ptr<TrainableRouter> router_;
  std::unique_ptr<std::atomic<uint64_t>[]> counts_;
  std::unique_ptr<Http> http_;
  std::thread serve_thread_;
  int port_ = 0;
  bool running_ = false;
};

// ---- Mock backend ------------------------------------------------------------
//
// Minimal completion stub for integration tests: POST /complete
// {"prompt": text} -> {"text": "<canned> [<model name>]"} after an optional
// artificial delay.
class MockBackend {
 public:
  MockBackend(std::string model_name, std::string canned_text,
              size_t delay_ms = 0);
  ~MockBackend();
  MockBackend(const MockBackend&) = delete;
  MockBackend& operator=(const MockBackend&) = delete;

  void start();  // binds an ephemeral 127.0.0.1 port
  void stop();

  int port() const { return port_; }
  std::string base_url() const;
  const std::string& model_name() const { return model_name_; }
  uint64_t request_count() const { return requests_.load(); }

 private:
  struct Http;

  std::string model_name_;
  std::string canned_text_;
  size_t delay_ms_;
  std::unique_ptr<Http> http_;
  std::thread serve_thread_;
  std::atomic<uint64_t> requests_{0};
  int port_ = 0;
  bool running_ = false;
};

}  // namespace lahr
