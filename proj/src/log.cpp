#include "lahr/log.hpp"

#include <iostream>
#include <mutex>

namespace lahr::logging {

namespace {
// The capture stack is thread local, so concurrent gateway handlers warning at
// the same time never interleave into each other's buffers.
thread_local WarningCapture* g_capture = nullptr;
std::mutex g_stderr_mutex;
}  // namespace

void warn(const std::string& message) {
  if (g_capture != nullptr) {
    g_capture->messages_.push_back(message);
    return;
  }
  std::lock_guard<std::mutex> lock(g_stderr_mutex);
  std::cerr << "warning: " << message << "\n";
}

WarningCapture::WarningCapture() : previous_(g_capture) { g_capture = this; }

WarningCapture::~WarningCapture() { g_capture = previous_; }

bool WarningCapture::contains(const std::string& needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace lahr::logging
