#include "lahr/masks.hpp"

namespace lahr {

AttentionMask build_causal_mask(size_t seq_len) {
  if (seq_len == 0) throw ContractError("build_causal_mask: empty sequence");
  AttentionMask mask(seq_len, seq_len, false);
  for (size_t i = 0; i < seq_len; ++i) {
    for (size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  }
  return mask;
}

AttentionMask build_block_isolation_mask(
    size_t query_len, const std::vector<size_t>& block_lengths) {
  if (query_len < 1) {
    throw ContractError("build_block_isolation_mask: query length must be >= 1");
  }
  if (block_lengths.empty()) {
    throw ContractError("build_block_isolation_mask: no blocks");
  }
  size_t total = query_len;
  for (size_t len : block_lengths) {
    if (len == 0) {
      throw ContractError("build_block_isolation_mask: empty block");
    }
    total += len;
  }
  AttentionMask mask(total, total, false);
  // Causal attention within the query prefix.
  for (size_t i = 0; i < query_len; ++i) {
    for (size_t j = 0; j <= i; ++j) mask.set(i, j, true);
  }
  size_t offset = query_len;
  for (size_t len : block_lengths) {
    for (size_t i = 0; i < len; ++i) {
      const size_t row = offset + i;
      for (size_t j = 0; j < query_len; ++j) mask.set(row, j, true);
      for (size_t j = offset; j <= row; ++j) mask.set(row, j, true);
    }
    offset += len;
  }
  return mask;
}

AttentionMask build_batched_mid_mask(size_t query_len, size_t num_models) {
  if (num_models < 1) {
    throw ContractError("build_batched_mid_mask: need at least one model");
  }
  return build_block_isolation_mask(query_len,
                                    std::vector<size_t>(num_models, 1));
}

AttentionMask build_bidirectional_mask(const std::vector<uint8_t>& is_padding) {
  const size_t n = is_padding.size();
  if (n == 0) throw ContractError("build_bidirectional_mask: empty sequence");
  AttentionMask mask(n, n, false);
  for (size_t i = 0; i < n; ++i) {
    if (is_padding[i]) {
      mask.set(i, i, true);
      continue;
    }
    for (size_t j = 0; j < n; ++j) {
      if (!is_padding[j]) mask.set(i, j, true);
    }
  }
  return mask;
}

bool is_causal_compatible(const AttentionMask& mask) {
  for (size_t i = 0; i < mask.rows(); ++i) {
    for (size_t j = i + 1; j < mask.cols(); ++j) {
      if (mask.allowed(i, j)) return false;
    }
  }
  return true;
}

std::vector<size_t> block_isolation_positions(
    size_t query_len, const std::vector<size_t>& block_lengths) {
  std::vector<size_t> pos;
  size_t total = query_len;
  for (size_t len : block_lengths) total += len;
  pos.reserve(total);
  for (size_t i = 0; i < query_len; ++i) pos.push_back(i);
  for (size_t len : block_lengths) {
    for (size_t i = 0; i < len; ++i) pos.push_back(query_len + i);
  }
  return pos;
}

std::vector<size_t> sequential_positions(size_t len) {
  std::vector<size_t> pos(len);
  for (size_t i = 0; i < len; ++i) pos[i] = i;
  return pos;
}

}  // namespace lahr
