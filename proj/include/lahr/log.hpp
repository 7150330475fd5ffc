#pragma once

#include <string>
#include <vector>

namespace lahr::logging {

// Emit a warning. By default writes one line to stderr; inside a
// WarningCapture scope the message is recorded instead so callers
// (and tests) can inspect what was warned about.
void warn(const std::string& message);

// RAII scope that redirects warn() on the current thread into a buffer.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

 private:
  friend void warn(const std::string&);
  std::vector<std::string> messages_;
  WarningCapture* previous_;
};

}  // namespace lahr::logging
