#pragma once

#include <string>
#include <vector>

#include "lahr/errors.hpp"

namespace lahr {

// Byte-level vocabulary: ids 0-255 are raw bytes, then PAD, EOS, CLS, then
// one contiguous MID_t id per candidate model (t is 1-based). Total size is
// 259 + T. Ids are dense and stable for a given T.
class Vocabulary {
 public:
  explicit Vocabulary(size_t num_models);

  size_t num_models() const { return num_models_; }
  size_t size() const { return 259 + num_models_; }

  int pad_id() const { return 256; }
  int eos_id() const { return 257; }
  int cls_id() const { return 258; }
  int mid_id(size_t t) const;  // t in [1, T]

  bool is_byte(int id) const { return id >= 0 && id < 256; }
  bool is_mid(int id) const {
    return id > cls_id() && id <= cls_id() + static_cast<int>(num_models_);
  }

  // Resolves a special token name ("PAD", "EOS", "CLS", "MID_3") to its id.
  int special_id(const std::string& name) const;

  // Byte tokenization with optional special tokens around the text. When
  // max_len > 0 and the sequence would run over, text bytes are dropped from
  // the end (the specials always survive). Specials alone exceeding max_len
  // is a contract error.
  std::vector<int> encode(const std::string& text,
                          const std::vector<std::string>& prefix_specials = {},
                          const std::vector<std::string>& suffix_specials = {},
                          size_t max_len = 0) const;

  // Inverse of encode for byte tokens; special ids are skipped.
  std::string decode(const std::vector<int>& ids) const;

 private:
  size_t num_models_;
};

}  // namespace lahr
