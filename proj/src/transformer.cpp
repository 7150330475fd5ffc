#include "lahr/transformer.hpp"

#include <cmath>

#include "lahr/masks.hpp"

namespace lahr {

namespace {

Tensor init_matrix(size_t rows, size_t cols, Rng& rng, double stddev = 0.02) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_values({rows, cols}, std::move(v), true);
}

Tensor apply_ln(const Tensor& x, const Tensor& gain, const Tensor& bias,
                double eps) {
  return add(mul(layer_norm_rows(x, eps), gain), bias);
}

}  // namespace

void TransformerConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || d_ff == 0 || max_seq == 0) {
    throw ContractError("TransformerConfig: all dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ContractError("TransformerConfig: d_model " + std::to_string(d_model) +
                        " not divisible by heads " + std::to_string(heads));
  }
  if (vocab_size == 0) {
    throw ContractError("TransformerConfig: vocab_size unset");
  }
}

Transformer::Transformer(TransformerConfig config, Rng& rng)
    : config_(config) {
  config_.validate();
  const size_t d = config_.d_model;
  tok_emb_ = init_matrix(config_.vocab_size, d, rng);
  pos_emb_ = init_matrix(config_.max_seq, d, rng);
  layers_.reserve(config_.layers);
  for (size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.ln1_gain = Tensor::full({1, d}, 1.0, true);
    layer.ln1_bias = Tensor::zeros({1, d}, true);
    layer.wq = init_matrix(d, d, rng);
    layer.bq = Tensor::zeros({1, d}, true);
    layer.wk = init_matrix(d, d, rng);
    layer.bk = Tensor::zeros({1, d}, true);
    layer.wv = init_matrix(d, d, rng);
    layer.bv = Tensor::zeros({1, d}, true);
    layer.wo = init_matrix(d, d, rng);
    layer.bo = Tensor::zeros({1, d}, true);
    layer.ln2_gain = Tensor::full({1, d}, 1.0, true);
    layer.ln2_bias = Tensor::zeros({1, d}, true);
    layer.w1 = init_matrix(d, config_.d_ff, rng);
    layer.b1 = Tensor::zeros({1, config_.d_ff}, true);
    layer.w2 = init_matrix(config_.d_ff, d, rng);
    layer.b2 = Tensor::zeros({1, d}, true);
    layers_.push_back(std::move(layer));
  }
  final_ln_gain_ = Tensor::full({1, d}, 1.0, true);
  final_ln_bias_ = Tensor::zeros({1, d}, true);
  lm_w_ = Tensor::zeros({d, config_.vocab_size}, true);
  lm_b_ = Tensor::zeros({1, config_.vocab_size}, true);
}

ForwardActivations Transformer::forward(const std::vector<int>& tokens,
                                        const AttentionMask& mask,
                                        const std::vector<size_t>& position_ids,
                                        bool need_logits) const {
  const size_t seq = tokens.size();
  if (seq == 0) throw ContractError("Transformer::forward: empty input");
  if (seq > config_.max_seq) {
    throw ContractError("Transformer::forward: sequence length " +
                        std::to_string(seq) + " exceeds max " +
                        std::to_string(config_.max_seq));
  }
  if (mask.rows() != seq || mask.cols() != seq) {
    throw ContractError("Transformer::forward: mask " +
                        std::to_string(mask.rows()) + "x" +
                        std::to_string(mask.cols()) +
                        " does not match sequence length " +
                        std::to_string(seq));
  }
  if (position_ids.size() != seq) {
    throw ContractError(
        "Transformer::forward: position ids length does not match tokens");
  }
  std::vector<int> pos_ids_int(seq);
  for (size_t i = 0; i < seq; ++i) {
    if (position_ids[i] >= config_.max_seq) {
      throw ContractError("Transformer::forward: position id " +
                          std::to_string(position_ids[i]) + " exceeds max " +
                          std::to_string(config_.max_seq));
    }
    pos_ids_int[i] = static_cast<int>(position_ids[i]);
  }
  if (config_.directionality == TransformerConfig::Directionality::causal &&
      !is_causal_compatible(mask)) {
    throw ContractError(
        "Transformer::forward: non-causal mask in a causal model");
  }
  mask.validate_rows_nonempty();

  const size_t d = config_.d_model;
  const size_t heads = config_.heads;
  const size_t dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor x = add(embedding_rows(tok_emb_, tokens),
                 embedding_rows(pos_emb_, pos_ids_int));
  for (const Layer& layer : layers_) {
    Tensor a = apply_ln(x, layer.ln1_gain, layer.ln1_bias, config_.ln_eps);
    Tensor q = add(matmul(a, layer.wq), layer.bq);
    Tensor k = add(matmul(a, layer.wk), layer.bk);
    Tensor v = add(matmul(a, layer.wv), layer.bv);
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
      Tensor weights = softmax_rows(masked_fill(scores, mask, kMaskFill));
      head_outputs.push_back(matmul(weights, vh));
    }
    Tensor ctx = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
    x = add(x, add(matmul(ctx, layer.wo), layer.bo));
    Tensor b = apply_ln(x, layer.ln2_gain, layer.ln2_bias, config_.ln_eps);
    Tensor ff = add(matmul(gelu(add(matmul(b, layer.w1), layer.b1)), layer.w2),
                    layer.b2);
    x = add(x, ff);
  }
  ForwardActivations out;
  out.hidden = apply_ln(x, final_ln_gain_, final_ln_bias_, config_.ln_eps);
  if (need_logits) out.logits = lm_logits(out.hidden);
  return out;
}

Tensor Transformer::lm_logits(const Tensor& hidden_rows) const {
  if (hidden_rows.cols() != config_.d_model) {
    throw ContractError("Transformer::lm_logits: width " +
                        std::to_string(hidden_rows.cols()) +
                        " does not match d_model " +
                        std::to_string(config_.d_model));
  }
  return add(matmul(hidden_rows, lm_w_), lm_b_);
}

std::vector<NamedTensor> Transformer::named_parameters() {
  std::vector<NamedTensor> out;
  out.push_back({"tok_emb", tok_emb_});
  out.push_back({"pos_emb", pos_emb_});
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer& layer = layers_[l];
    out.push_back({p + "ln1.gain", layer.ln1_gain});
    out.push_back({p + "ln1.bias", layer.ln1_bias});
    out.push_back({p + "attn.wq", layer.wq});
    out.push_back({p + "attn.bq", layer.bq});
    out.push_back({p + "attn.wk", layer.wk});
    out.push_back({p + "attn.bk", layer.bk});
    out.push_back({p + "attn.wv", layer.wv});
    out.push_back({p + "attn.bv", layer.bv});
    out.push_back({p + "attn.wo", layer.wo});
    out.push_back({p + "attn.bo", layer.bo});
    out.push_back({p + "ln2.gain", layer.ln2_gain});
    out.push_back({p + "ln2.bias", layer.ln2_bias});
    out.push_back({p + "ff.w1", layer.w1});
    out.push_back({p + "ff.b1", layer.b1});
    out.push_back({p + "ff.w2", layer.w2});
    out.push_back({p + "ff.b2", layer.b2});
  }
  out.push_back({"final_ln.gain", final_ln_gain_});
  out.push_back({"final_ln.bias", final_ln_bias_});
  out.push_back({"lm.w", lm_w_});
  out.push_back({"lm.b", lm_b_});
  return out;
}

std::vector<Tensor> Transformer::parameters() {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

ForwardActivations clm_forward(const Transformer& model,
                               const std::vector<int>& tokens,
                               const AttentionMask& mask,
                               const std::vector<size_t>& position_ids,
                               bool need_logits) {
  if (model.config().directionality !=
      TransformerConfig::Directionality::causal) {
    throw ContractError("clm_forward: model is not causal");
  }
  return model.forward(tokens, mask, position_ids, need_logits);
}

ForwardActivations mlm_forward(const Transformer& model, int cls_id,
                               const std::vector<int>& tokens,
                               const std::vector<uint8_t>& is_padding,
                               bool need_logits) {
  if (model.config().directionality !=
      TransformerConfig::Directionality::bidirectional) {
    throw ContractError("mlm_forward: model is not bidirectional");
  }
  if (tokens.empty() || tokens[0] != cls_id) {
    throw ContractError("mlm_forward: input must start with CLS");
  }
  if (is_padding.size() != tokens.size()) {
    throw ContractError("mlm_forward: padding flags do not match tokens");
  }
  if (!is_padding.empty() && is_padding[0]) {
    throw ContractError("mlm_forward: CLS cannot be padding");
  }
  AttentionMask mask = build_bidirectional_mask(is_padding);
  return model.forward(tokens, mask, sequential_positions(tokens.size()),
                       need_logits);
}

AttentionPool::AttentionPool(size_t d_model, Rng& rng) : d_model_(d_model) {
  if (d_model_ == 0) throw ContractError("AttentionPool: zero width");
  wk_ = init_matrix(d_model_, d_model_, rng);
  wv_ = init_matrix(d_model_, d_model_, rng);
}

Tensor AttentionPool::pool(const Tensor& query, const Tensor& keys) const {
  if (query.rank() != 2 || query.rows() != 1 || query.cols() != d_model_) {
    throw ContractError("AttentionPool::pool: query must be [1," +
                        std::to_string(d_model_) + "], got " +
                        shape_str(query.shape()));
  }
  if (keys.cols() != d_model_) {
    throw ContractError("AttentionPool::pool: key width " +
                        std::to_string(keys.cols()) + " does not match d " +
                        std::to_string(d_model_));
  }
  Tensor projected_keys = matmul(keys, wk_);
  Tensor projected_values = matmul(keys, wv_);
  Tensor scores = scale(matmul(query, transpose(projected_keys)),
                        1.0 / std::sqrt(static_cast<double>(d_model_)));
  Tensor weights = softmax_rows(scores);
  return matmul(weights, projected_values);
}

std::vector<NamedTensor> AttentionPool::named_parameters() {
  return {{"pool.wk", wk_}, {"pool.wv", wv_}};
}

std::vector<Tensor> AttentionPool::parameters() {
  return {wk_, wv_};
}

}  // namespace lahr
