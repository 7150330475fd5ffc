#pragma once

#include <cstdint>
#include <vector>

#include "lahr/tensor.hpp"

namespace lahr {

// Standard lower-triangular causal mask.
AttentionMask build_causal_mask(size_t seq_len);

// Causal mask over a query prefix followed by isolated blocks: every
// position attends causally within the query; each block position attends to
// the whole query and causally within its own block, never into another
// block. Used for single-pass multi-candidate inputs.
AttentionMask build_block_isolation_mask(size_t query_len,
                                         const std::vector<size_t>& block_lengths);

// Inference-time mask for x || MID_1 || ... || MID_T: block isolation with
// every block a single MID token. Row q-1+t attends exactly to the query and
// itself.
AttentionMask build_batched_mid_mask(size_t query_len, size_t num_models);

// Bidirectional mask over non-padding positions. Padding positions are
// excluded as keys everywhere; a padding row attends only to itself so its
// softmax stays well defined (its output is never consumed).
AttentionMask build_bidirectional_mask(const std::vector<uint8_t>& is_padding);

// True iff no position attends to a later position.
bool is_causal_compatible(const AttentionMask& mask);

// Position ids matching build_block_isolation_mask: the query occupies
// positions 0..q-1 and every block restarts at position q, exactly as if it
// were the only continuation. This is what makes the isolated blocks
// bit-identical to separate passes.
std::vector<size_t> block_isolation_positions(size_t query_len,
                                              const std::vector<size_t>& block_lengths);

// Sequential positions 0..len-1.
std::vector<size_t> sequential_positions(size_t len);

}  // namespace lahr
