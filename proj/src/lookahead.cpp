#include "lahr/lookahead.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"
#include "lahr/log.hpp"
#include "lahr/masks.hpp"
#include "lahr/rng.hpp"

namespace lahr {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Variant v) {
  return v == Variant::clm ? "clm" : "mlm";
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::end: return "end";
    case MaskStrategy::start: return "start";
    case MaskStrategy::random: return "random";
  }
  throw ContractError("unknown mask strategy");
}

Variant variant_from_string(const std::string& s) {
  if (s == "clm") return Variant::clm;
  if (s == "mlm") return Variant::mlm;
  throw FormatError("unknown variant '" + s + "' (expected 'clm' or 'mlm')");
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "end") return MaskStrategy::end;
  if (s == "start") return MaskStrategy::start;
  if (s == "random") return MaskStrategy::random;
  throw FormatError("unknown masking strategy '" + s +
                    "' (expected 'end', 'start' or 'random')");
}

void LookaheadConfig::validate() const {
  if (num_models < 2) throw ContractError("lookahead: num_models must be >= 2");
  if (lambda < 0.0) throw ContractError("lookahead: lambda must be >= 0");
  if (m < 1) throw ContractError("lookahead: m must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ContractError("lookahead: alpha must lie in (0, 1]");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0 + 1e-12)) {
    throw ContractError("lookahead: threshold must lie in [0, 1]");
  }
  if (max_query_bytes < 1) {
    throw ContractError("lookahead: max_query_bytes must be >= 1");
  }
  if (max_response_bytes < 1) {
    throw ContractError("lookahead: max_response_bytes must be >= 1");
  }
}

std::string LookaheadConfig::to_json() const {
  ordered_json j;
  j["variant"] = lahr::to_string(variant);
  j["num_models"] = num_models;
  j["lambda"] = lambda;
  j["m"] = m;
  j["alpha"] = alpha;
  j["masking"] = lahr::to_string(masking);
  j["curriculum"] = curriculum;
  j["threshold"] = threshold;
  j["max_query_bytes"] = max_query_bytes;
  j["max_response_bytes"] = max_response_bytes;
  j["backbone"] = {{"layers", backbone.layers},
                   {"d_model", backbone.d_model},
                   {"heads", backbone.heads},
                   {"d_ff", backbone.d_ff},
                   {"max_seq", backbone.max_seq},
                   {"ln_eps", backbone.ln_eps}};
  return j.dump();
}

LookaheadConfig LookaheadConfig::from_json(const std::string& json_text) {
  LookaheadConfig cfg;
  try {
    ordered_json j = ordered_json::parse(json_text);
    cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    cfg.num_models = j.at("num_models").get<size_t>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.m = j.at("m").get<size_t>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.masking = mask_strategy_from_string(j.at("masking").get<std::string>());
    cfg.curriculum = j.at("curriculum").get<bool>();
    cfg.threshold = j.at("threshold").get<double>();
    cfg.max_query_bytes = j.at("max_query_bytes").get<size_t>();
    cfg.max_response_bytes = j.at("max_response_bytes").get<size_t>();
    const ordered_json& b = j.at("backbone");
    cfg.backbone.layers = b.at("layers").get<size_t>();
    cfg.backbone.d_model = b.at("d_model").get<size_t>();
    cfg.backbone.heads = b.at("heads").get<size_t>();
    cfg.backbone.d_ff = b.at("d_ff").get<size_t>();
    cfg.backbone.max_seq = b.at("max_seq").get<size_t>();
    cfg.backbone.ln_eps = b.at("ln_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad lookahead config record: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

LookaheadConfig default_clm_config(size_t num_models) {
  LookaheadConfig cfg;
  cfg.variant = Variant::clm;
  cfg.num_models = num_models;
  cfg.lambda = 0.5;
  return cfg;
}

LookaheadConfig default_mlm_config(size_t num_models) {
  LookaheadConfig cfg;
  cfg.variant = Variant::mlm;
  cfg.num_models = num_models;
  cfg.lambda = 0.2;
  cfg.m = 64;
  cfg.alpha = 0.4;
  cfg.masking = MaskStrategy::end;
  return cfg;
}

double mask_ratio(double u, double alpha) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw ContractError("mask_ratio: progress u must lie in [0, 1]");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ContractError("mask_ratio: alpha must lie in (0, 1]");
  }
  return std::min(1.0, u / alpha);
}

std::vector<size_t> select_masked_positions(size_t L_eff, double rho,
                                            MaskStrategy strategy,
                                            uint64_t seed) {
  if (L_eff < 1) throw ContractError("select_masked_positions: L_eff >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ContractError("select_masked_positions: rho must lie in [0, 1]");
  }
  // ceil with a tiny slack so 0.1 * 10 and friends don't round up to 2.
  size_t count = static_cast<size_t>(
      std::ceil(rho * static_cast<double>(L_eff) - 1e-12));
  count = std::min(count, L_eff);
  std::vector<size_t> positions;
  positions.reserve(count);
  switch (strategy) {
    case MaskStrategy::end:
      for (size_t j = L_eff - count + 1; j <= L_eff; ++j) positions.push_back(j);
      break;
    case MaskStrategy::start:
      for (size_t j = 1; j <= count; ++j) positions.push_back(j);
      break;
    case MaskStrategy::random: {
      std::vector<size_t> all(L_eff);
      for (size_t j = 0; j < L_eff; ++j) all[j] = j + 1;
      Rng rng(seed);
      rng.shuffle(all);
      positions.assign(all.begin(),
                       all.begin() + static_cast<std::ptrdiff_t>(count));
      std::sort(positions.begin(), positions.end());
      break;
    }
  }
  return positions;
}

Tensor routing_loss_bce(const Tensor& c_hat, const std::vector<double>& labels) {
  if (c_hat.size() != labels.size()) {
    throw ContractError("routing_loss_bce: " + std::to_string(c_hat.size()) +
                        " predictions vs " + std::to_string(labels.size()) +
                        " labels");
  }
  const Tensor clamped = clamp(c_hat, 1e-7, 1.0 - 1e-7);
  const Tensor c = Tensor::from_values(c_hat.shape(), labels);
  const Tensor one = Tensor::full(c_hat.shape(), 1.0);
  const Tensor term = add(mul(c, log_elem(clamped)),
                          mul(sub(one, c), log_elem(sub(one, clamped))));
  return neg(reduce_mean(term));
}

Tensor joint_loss(const Tensor& route_loss, const Tensor& resp_loss,
                  double lambda) {
  if (route_loss.size() != 1 || resp_loss.size() != 1) {
    throw ContractError("joint_loss: inputs must be scalars");
  }
  if (!std::isfinite(route_loss.scalar_value()) ||
      !std::isfinite(resp_loss.scalar_value())) {
    throw NumericError("joint_loss: non-finite loss term");
  }
  return add(route_loss, scale(resp_loss, lambda));
}

CheckpointData snapshot_router(TrainableRouter& router, uint64_t seed,
                               uint64_t steps, double validation_score) {
  CheckpointData ckpt = snapshot_parameters(router.kind(),
                                            router.config_json(),
                                            router.named_parameters());
  ckpt.seed = seed;
  ckpt.steps = steps;
  ckpt.validation_score = validation_score;
  return ckpt;
}

void restore_router(TrainableRouter& router, const CheckpointData& checkpoint) {
  if (checkpoint.kind != router.kind()) {
    throw ContractError("checkpoint kind '" + checkpoint.kind +
                        "' does not match router kind '" + router.kind() +
                        "'");
  }
  restore_parameters(router.named_parameters(), checkpoint);
}

namespace {

Tensor init_matrix(size_t rows, size_t cols, Rng& rng, double stddev = 0.02) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.normal(0.0, stddev);
  return Tensor::from_values({rows, cols}, std::move(values), true);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// ClmRouter

ClmRouter::ClmRouter(const LookaheadConfig& config, uint64_t init_seed)
    : config_(config), vocab_(config.num_models), backbone_([&] {
        LookaheadConfig cfg = config;
        cfg.validate();
        if (cfg.variant != Variant::clm) {
          throw ContractError("ClmRouter requires a clm-variant config");
        }
        TransformerConfig bc = cfg.backbone;
        bc.vocab_size = Vocabulary(cfg.num_models).size();
        bc.directionality = TransformerConfig::Directionality::causal;
        bc.validate();
        Rng rng(init_seed);
        return Transformer(bc, rng);
      }()) {
  config_.backbone = backbone_.config();
  const size_t d = config_.backbone.d_model;
  head_w_ = Tensor::zeros({d, 1}, true);
  head_b_ = Tensor::zeros({1, 1}, true);
}

Tensor ClmRouter::scores_from_latents(const Tensor& latents) const {
  return sigmoid(add(matmul(latents, head_w_), head_b_));
}

ClmRouter::Prediction ClmRouter::predict_latents(const std::string& query) const {
  std::vector<int> tokens =
      vocab_.encode(query, {}, {}, config_.max_query_bytes);
  const size_t q = tokens.size();
  const size_t T = config_.num_models;
  if (q + T > config_.backbone.max_seq) {
    throw ContractError("clm input length " + std::to_string(q + T) +
                        " exceeds maximum " +
                        std::to_string(config_.backbone.max_seq));
  }
  for (size_t t = 1; t <= T; ++t) tokens.push_back(vocab_.mid_id(t));
  const AttentionMask mask = build_batched_mid_mask(q, T);
  const std::vector<size_t> positions =
      block_isolation_positions(q, std::vector<size_t>(T, 1));
  const ForwardActivations act =
      backbone_.forward(tokens, mask, positions, /*need_logits=*/false);
  std::vector<size_t> mid_rows(T);
  for (size_t t = 0; t < T; ++t) mid_rows[t] = q + t;
  Prediction out;
  out.latents = gather_rows(act.hidden, mid_rows);
  out.scores = scores_from_latents(out.latents);
  return out;
}

Tensor ClmRouter::reconstruction_loss(
    const std::string& query, const std::vector<std::string>& responses) const {
  const size_t T = config_.num_models;
  if (responses.size() != T) {
    throw ContractError("reconstruction_loss: expected " + std::to_string(T) +
                        " responses, got " + std::to_string(responses.size()));
  }
  std::vector<int> tokens =
      vocab_.encode(query, {}, {}, config_.max_query_bytes);
  const size_t q = tokens.size();
  std::vector<std::vector<int>> resp_tokens(T);
  std::vector<size_t> block_lengths(T);
  size_t total = q;
  size_t longest = 0;
  for (size_t t = 0; t < T; ++t) {
    resp_tokens[t] =
        vocab_.encode(responses[t], {}, {}, config_.max_response_bytes);
    block_lengths[t] = 1 + resp_tokens[t].size();
    total += block_lengths[t];
    longest = std::max(longest, resp_tokens[t].size());
  }
  if (total > config_.backbone.max_seq ||
      q + longest + 1 > config_.backbone.max_seq) {
    throw ContractError("clm training input length " + std::to_string(total) +
                        " exceeds maximum " +
                        std::to_string(config_.backbone.max_seq));
  }
  std::vector<size_t> block_starts(T);
  for (size_t t = 0; t < T; ++t) {
    block_starts[t] = tokens.size();
    tokens.push_back(vocab_.mid_id(t + 1));
    tokens.insert(tokens.end(), resp_tokens[t].begin(), resp_tokens[t].end());
  }
  const AttentionMask mask = build_block_isolation_mask(q, block_lengths);
  const std::vector<size_t> positions =
      block_isolation_positions(q, block_lengths);
  const ForwardActivations act =
      backbone_.forward(tokens, mask, positions, /*need_logits=*/false);

  Tensor sum = Tensor::scalar(0.0);
  for (size_t t = 0; t < T; ++t) {
    const std::vector<int>& y = resp_tokens[t];
    if (y.empty()) {
      logging::warn("reconstruction_loss: response " + std::to_string(t + 1) +
                    " is empty; term contributes 0");
      continue;
    }
    // Teacher forcing: the row at MID_t predicts y[0], the row at y[j]
    // predicts y[j+1]; the final response token predicts nothing.
    std::vector<size_t> rows(y.size());
    for (size_t j = 0; j < y.size(); ++j) rows[j] = block_starts[t] + j;
    const Tensor hidden_rows = gather_rows(act.hidden, rows);
    const Tensor logits = backbone_.lm_logits(hidden_rows);
    const Tensor logp = log_softmax_rows(logits);
    std::vector<std::pair<size_t, size_t>> picks(y.size());
    for (size_t j = 0; j < y.size(); ++j) {
      picks[j] = {j, static_cast<size_t>(y[j])};
    }
    const Tensor token_logp = take(logp, picks);
    sum = add(sum, neg(reduce_mean(token_logp)));
  }
  return scale(sum, 1.0 / static_cast<double>(T));
}

LossParts ClmRouter::example_loss(const RoutingExample& example,
                                  const CurriculumState& /*state*/) {
  if (example.labels.size() != config_.num_models) {
    throw ContractError("example '" + example.id +
                        "' has no labels for training");
  }
  LossParts parts;
  const Prediction pred = predict_latents(example.query);
  parts.route = routing_loss_bce(pred.scores, example.labels);
  if (config_.lambda > 0.0) {
    parts.resp = reconstruction_loss(example.query, example.responses);
  } else {
    parts.resp = Tensor::scalar(0.0);
  }
  parts.joint = joint_loss(parts.route, parts.resp, config_.lambda);
  return parts;
}

RoutingDecision ClmRouter::route(const std::string& query) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const Prediction pred = predict_latents(query);
  RoutingDecision decision;
  decision.scores = pred.scores.values();
  decision.selected = argmax_lowest_index(decision.scores);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

std::vector<double> ClmRouter::routing_state(const std::string& query) {
  NoGradGuard no_grad;
  return predict_latents(query).latents.values();
}

std::vector<NamedTensor> ClmRouter::named_parameters() {
  std::vector<NamedTensor> params = backbone_.named_parameters();
  params.push_back({"head.w", head_w_});
  params.push_back({"head.b", head_b_});
  return params;
}

std::string ClmRouter::config_json() const { return config_.to_json(); }

// ---------------------------------------------------------------------------
// MLM input construction and reconstruction loss

MlmInput mlm_build_input(const Vocabulary& vocab, const std::string& query,
                         const std::vector<std::string>& responses, size_t m,
                         double rho, MaskStrategy strategy, uint64_t seed,
                         size_t max_seq, size_t max_query_bytes) {
  const size_t T = vocab.num_models();
  const bool inference = responses.empty();
  if (!inference && responses.size() != T) {
    throw ContractError("mlm_build_input: expected " + std::to_string(T) +
                        " responses, got " + std::to_string(responses.size()));
  }
  MlmInput input;
  input.tokens.push_back(vocab.cls_id());
  input.is_padding.push_back(0);
  const std::vector<int> query_tokens =
      vocab.encode(query, {}, {}, max_query_bytes);
  const size_t total = 1 + query_tokens.size() + T * m;
  if (total > max_seq) {
    throw ContractError("mlm input length " + std::to_string(total) +
                        " exceeds maximum " + std::to_string(max_seq));
  }
  for (int id : query_tokens) {
    input.tokens.push_back(id);
    input.is_padding.push_back(0);
  }
  input.block_start.resize(T);
  input.loss_positions.resize(T);
  input.loss_targets.resize(T);
  Rng seed_stream(seed);
  for (size_t t = 0; t < T; ++t) {
    const uint64_t block_seed = seed_stream.next_u64();
    input.block_start[t] = input.tokens.size();
    if (inference) {
      for (size_t j = 0; j < m; ++j) {
        input.tokens.push_back(vocab.mid_id(t + 1));
        input.is_padding.push_back(0);
      }
      continue;
    }
    const std::vector<int> y = vocab.encode(responses[t], {}, {}, m);
    const size_t L_eff = y.size();
    if (L_eff == 0) {
      logging::warn("mlm_build_input: response " + std::to_string(t + 1) +
                    " is empty; its block is all padding");
      for (size_t j = 0; j < m; ++j) {
        input.tokens.push_back(vocab.pad_id());
        input.is_padding.push_back(1);
      }
      continue;
    }
    const std::vector<size_t> masked =
        select_masked_positions(L_eff, rho, strategy, block_seed);
    std::vector<uint8_t> is_masked(L_eff + 1, 0);
    for (size_t j : masked) is_masked[j] = 1;
    for (size_t j = 1; j <= m; ++j) {
      if (j <= L_eff) {
        if (is_masked[j]) {
          input.loss_positions[t].push_back(input.tokens.size());
          input.loss_targets[t].push_back(y[j - 1]);
          input.tokens.push_back(vocab.mid_id(t + 1));
        } else {
          input.tokens.push_back(y[j - 1]);
        }
        input.is_padding.push_back(0);
      } else {
        input.tokens.push_back(vocab.pad_id());
        input.is_padding.push_back(1);
      }
    }
  }
  return input;
}

Tensor mlm_reconstruction_loss(
    const Transformer& model, const Tensor& hidden,
    const std::vector<std::vector<size_t>>& loss_positions,
    const std::vector<std::vector<int>>& loss_targets) {
  if (loss_positions.size() != loss_targets.size()) {
    throw ContractError("mlm_reconstruction_loss: positions/targets have "
                        "different block counts");
  }
  const size_t T = loss_positions.size();
  if (T == 0) throw ContractError("mlm_reconstruction_loss: no blocks");
  size_t total_masked = 0;
  for (size_t t = 0; t < T; ++t) {
    if (loss_positions[t].size() != loss_targets[t].size()) {
      throw ContractError("mlm_reconstruction_loss: block " +
                          std::to_string(t + 1) +
                          " has mismatched positions and targets");
    }
    total_masked += loss_positions[t].size();
  }
  if (total_masked == 0) {
    logging::warn("mlm_reconstruction_loss: no masked positions; loss is 0");
    return Tensor::scalar(0.0);
  }
  Tensor sum = Tensor::scalar(0.0);
  for (size_t t = 0; t < T; ++t) {
    if (loss_positions[t].empty()) continue;
    const Tensor rows = gather_rows(hidden, loss_positions[t]);
    const Tensor logits = model.lm_logits(rows);
    const Tensor logp = log_softmax_rows(logits);
    std::vector<std::pair<size_t, size_t>> picks(loss_positions[t].size());
    for (size_t j = 0; j < picks.size(); ++j) {
      picks[j] = {j, static_cast<size_t>(loss_targets[t][j])};
    }
    sum = add(sum, neg(reduce_mean(take(logp, picks))));
  }
  return scale(sum, 1.0 / static_cast<double>(T));
}

// ---------------------------------------------------------------------------
// MlmRouter

MlmRouter::MlmRouter(const LookaheadConfig& config, uint64_t init_seed)
    : config_(config),
      vocab_(config.num_models),
      backbone_([&] {
        LookaheadConfig cfg = config;
        cfg.validate();
        if (cfg.variant != Variant::mlm) {
          throw ContractError("MlmRouter requires an mlm-variant config");
        }
        TransformerConfig bc = cfg.backbone;
        bc.vocab_size = Vocabulary(cfg.num_models).size();
        bc.directionality = TransformerConfig::Directionality::bidirectional;
        bc.validate();
        Rng rng(init_seed);
        return Transformer(bc, rng);
      }()),
      pool_([&] {
        Rng rng(init_seed ^ 0x706f6f6cULL);  // decorrelate pool init
        return AttentionPool(config.backbone.d_model, rng);
      }()) {
  config_.backbone = backbone_.config();
  const size_t d = config_.backbone.d_model;
  const size_t T = config_.num_models;
  Rng rng(init_seed ^ 0x6d6c7068ULL);
  mlp_w1_ = init_matrix(d, d, rng);
  mlp_b1_ = Tensor::zeros({1, d}, true);
  // Final layer starts at zero so an untrained router scores every model 0.5.
  mlp_w2_ = Tensor::zeros({d, T}, true);
  mlp_b2_ = Tensor::zeros({1, T}, true);
}

std::vector<size_t> non_pad_block_rows(const MlmInput& input, size_t m) {
  std::vector<size_t> rows;
  rows.reserve(input.block_start.size() * m);
  for (size_t start : input.block_start) {
    for (size_t j = start; j < start + m; ++j) {
      if (!input.is_padding[j]) rows.push_back(j);
    }
  }
  return rows;
}

Tensor MlmRouter::scores_from_hidden(const Tensor& hidden,
                                     const MlmInput& input,
                                     Tensor* pooled_out) const {
  const std::vector<size_t> key_rows = non_pad_block_rows(input, config_.m);
  if (key_rows.empty()) {
    throw ContractError("mlm routing: no response positions to pool over");
  }
  const Tensor keys = gather_rows(hidden, key_rows);
  const Tensor cls_row = gather_rows(hidden, {0});
  const Tensor pooled = pool_.pool(cls_row, keys);
  if (pooled_out) *pooled_out = pooled;
  const Tensor h = gelu(add(matmul(pooled, mlp_w1_), mlp_b1_));
  return sigmoid(add(matmul(h, mlp_w2_), mlp_b2_));
}

LossParts MlmRouter::example_loss(const RoutingExample& example,
                                  const CurriculumState& state) {
  if (example.labels.size() != config_.num_models) {
    throw ContractError("example '" + example.id +
                        "' has no labels for training");
  }
  const double rho =
      config_.curriculum ? mask_ratio(state.u, config_.alpha) : 1.0;
  const MlmInput input = mlm_build_input(
      vocab_, example.query, example.responses, config_.m, rho,
      config_.masking, state.mask_seed, config_.backbone.max_seq,
      config_.max_query_bytes);
  const ForwardActivations act = mlm_forward(
      backbone_, vocab_.cls_id(), input.tokens, input.is_padding, false);
  const Tensor scores = scores_from_hidden(act.hidden, input, nullptr);

  LossParts parts;
  parts.route = routing_loss_bce(scores, example.labels);
  size_t total_masked = 0;
  for (const auto& block : input.loss_positions) total_masked += block.size();
  if (config_.lambda > 0.0 && total_masked > 0) {
    parts.resp = mlm_reconstruction_loss(backbone_, act.hidden,
                                         input.loss_positions,
                                         input.loss_targets);
  } else {
    // Early curriculum steps can mask nothing; skip the zero-term cleanly.
    parts.resp = Tensor::scalar(0.0);
  }
  parts.joint = joint_loss(parts.route, parts.resp, config_.lambda);
  return parts;
}

MlmRouter::Prediction MlmRouter::predict(const std::string& query) const {
  const MlmInput input = mlm_build_input(
      vocab_, query, {}, config_.m, 1.0, config_.masking, 0,
      config_.backbone.max_seq, config_.max_query_bytes);
  const ForwardActivations act = mlm_forward(
      backbone_, vocab_.cls_id(), input.tokens, input.is_padding, false);
  Prediction out;
  out.scores = scores_from_hidden(act.hidden, input, &out.pooled);
  return out;
}

RoutingDecision MlmRouter::route(const std::string& query) {
  NoGradGuard no_grad;
  const auto start = std::chrono::steady_clock::now();
  const Prediction pred = predict(query);
  RoutingDecision decision;
  decision.scores = pred.scores.values();
  decision.selected = argmax_lowest_index(decision.scores);
  decision.router_latency_ms = elapsed_ms(start);
  return decision;
}

std::vector<double> MlmRouter::routing_state(const std::string& query) {
  NoGradGuard no_grad;
  return predict(query).pooled.values();
}

std::vector<NamedTensor> MlmRouter::named_parameters() {
  std::vector<NamedTensor> params = backbone_.named_parameters();
  for (NamedTensor& np : pool_.named_parameters()) params.push_back(np);
  params.push_back({"mlp.w1", mlp_w1_});
  params.push_back({"mlp.b1", mlp_b1_});
  params.push_back({"mlp.w2", mlp_w2_});
  params.push_back({"mlp.b2", mlp_b2_});
  return params;
}

std::string MlmRouter::config_json() const { return config_.to_json(); }

}  // namespace lahr
