#pragma once

#include <string>
#include <vector>

#include "lahr/rng.hpp"
#include "lahr/tensor.hpp"

namespace lahr {

struct TransformerConfig {
  enum class Directionality { causal, bidirectional };

  size_t layers = 4;
  size_t d_model = 128;
  size_t heads = 4;
  size_t d_ff = 512;
  size_t max_seq = 512;
  size_t vocab_size = 0;
  Directionality directionality = Directionality::causal;
  double ln_eps = 1e-12;

  void validate() const;
};

struct ForwardActivations {
  Tensor hidden;  // [seq, d]
  Tensor logits;  // [seq, |V|] when requested, undefined otherwise
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Pre-LN transformer with learned absolute position embeddings and an untied
// LM head. Position ids are explicit: callers that want a block to behave as
// if it directly followed the query give its tokens query-relative positions.
// The LM head starts at zero so an untrained model emits uniform logits.
class Transformer {
 public:
  Transformer(TransformerConfig config, Rng& rng);

  const TransformerConfig& config() const { return config_; }

  // tokens, mask and position_ids must agree in length; every position id
  // must be < max_seq. In causal mode the mask must be causal-compatible.
  ForwardActivations forward(const std::vector<int>& tokens,
                             const AttentionMask& mask,
                             const std::vector<size_t>& position_ids,
                             bool need_logits = true) const;

  // Applies the LM head to an arbitrary stack of hidden-state rows.
  Tensor lm_logits(const Tensor& hidden_rows) const;

  // Stable, named parameter listing (checkpoint order).
  std::vector<NamedTensor> named_parameters();
  std::vector<Tensor> parameters();

 private:
  struct Layer {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
  };

  TransformerConfig config_;
  Tensor tok_emb_;  // [V, d]
  Tensor pos_emb_;  // [max_seq, d]
  std::vector<Layer> layers_;
  Tensor final_ln_gain_, final_ln_bias_;
  Tensor lm_w_, lm_b_;  // [d, V], [1, V]
};

// Causal forward: thin wrapper asserting the model is causal; the mask must
// be causal-compatible (checked inside forward).
ForwardActivations clm_forward(const Transformer& model,
                               const std::vector<int>& tokens,
                               const AttentionMask& mask,
                               const std::vector<size_t>& position_ids,
                               bool need_logits = true);

// Bidirectional forward over CLS || ... with padding excluded from keys and
// sequential positions. tokens[0] must be the given CLS id.
ForwardActivations mlm_forward(const Transformer& model, int cls_id,
                               const std::vector<int>& tokens,
                               const std::vector<uint8_t>& is_padding,
                               bool need_logits = true);

// Single-head scaled dot-product pooling: raw query vector against learned
// key/value projections of the given key rows. Output is the convex
// combination of value projections under softmax attention weights.
class AttentionPool {
 public:
  AttentionPool(size_t d_model, Rng& rng);

  // query: [1, d]; keys: [n, d]; returns [1, d].
  Tensor pool(const Tensor& query, const Tensor& keys) const;

  std::vector<NamedTensor> named_parameters();
  std::vector<Tensor> parameters();

 private:
  size_t d_model_;
  Tensor wk_, wv_;  // [d, d]
};

}  // namespace lahr
