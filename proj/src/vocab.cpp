#include "lahr/vocab.hpp"

namespace lahr {

Vocabulary::Vocabulary(size_t num_models) : num_models_(num_models) {
  if (num_models_ < 1) {
    throw ContractError("Vocabulary: need at least one model identifier");
  }
}

int Vocabulary::mid_id(size_t t) const {
  if (t < 1 || t > num_models_) {
    throw ContractError("Vocabulary::mid_id: model index " + std::to_string(t) +
                        " outside [1," + std::to_string(num_models_) + "]");
  }
  return cls_id() + static_cast<int>(t);
}

int Vocabulary::special_id(const std::string& name) const {
  if (name == "PAD") return pad_id();
  if (name == "EOS") return eos_id();
  if (name == "CLS") return cls_id();
  if (name.rfind("MID_", 0) == 0) {
    const std::string num = name.substr(4);
    if (!num.empty() && num.find_first_not_of("0123456789") == std::string::npos) {
      return mid_id(std::stoul(num));
    }
  }
  throw ContractError("Vocabulary: unknown special token '" + name + "'");
}

std::vector<int> Vocabulary::encode(
    const std::string& text, const std::vector<std::string>& prefix_specials,
    const std::vector<std::string>& suffix_specials, size_t max_len) const {
  std::vector<int> prefix, suffix;
  for (const auto& name : prefix_specials) prefix.push_back(special_id(name));
  for (const auto& name : suffix_specials) suffix.push_back(special_id(name));

  size_t text_len = text.size();
  if (max_len > 0) {
    const size_t overhead = prefix.size() + suffix.size();
    if (overhead > max_len) {
      throw ContractError(
          "Vocabulary::encode: " + std::to_string(overhead) +
          " special tokens alone exceed max length " + std::to_string(max_len));
    }
    text_len = std::min(text_len, max_len - overhead);
  }

  std::vector<int> out;
  out.reserve(prefix.size() + text_len + suffix.size());
  out.insert(out.end(), prefix.begin(), prefix.end());
  for (size_t i = 0; i < text_len; ++i) {
    out.push_back(static_cast<int>(static_cast<unsigned char>(text[i])));
  }
  out.insert(out.end(), suffix.begin(), suffix.end());
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= size()) {
      throw ContractError("Vocabulary::decode: id " + std::to_string(id) +
                          " outside vocabulary of size " +
                          std::to_string(size()));
    }
    if (is_byte(id)) out.push_back(static_cast<char>(id));
  }
  return out;
}

}  // namespace lahr
