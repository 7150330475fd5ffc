#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lahr/checkpoint.hpp"
#include "lahr/corpus.hpp"
#include "lahr/router.hpp"
#include "lahr/transformer.hpp"
#include "lahr/vocab.hpp"

namespace lahr {

enum class Variant { clm, mlm };
enum class MaskStrategy { end, start, random };

std::string to_string(Variant v);
std::string to_string(MaskStrategy s);
Variant variant_from_string(const std::string& s);
MaskStrategy mask_strategy_from_string(const std::string& s);

// Configuration of a Lookahead router. `lambda` weights the auxiliary
// response-modeling loss; `m`, `alpha` and `masking` only apply to the MLM
// variant. `curriculum` disables the masking ramp (every block fully masked
// from step 0) for the no-curriculum ablation.
struct LookaheadConfig {
  Variant variant = Variant::mlm;
  size_t num_models = 3;
  double lambda = 0.2;
  size_t m = 64;
  double alpha = 0.4;
  MaskStrategy masking = MaskStrategy::end;
  bool curriculum = true;
  double threshold = 0.8;
  size_t max_query_bytes = 64;
  size_t max_response_bytes = 64;  // CLM teacher-forcing truncation
  TransformerConfig backbone;      // directionality is forced by the variant

  void validate() const;
  std::string to_json() const;
  static LookaheadConfig from_json(const std::string& json_text);
};

// Paper-default configurations: CLM uses lambda 0.5, MLM lambda 0.2 with
// m 64 and alpha 0.4.
LookaheadConfig default_clm_config(size_t num_models);
LookaheadConfig default_mlm_config(size_t num_models);

// Curriculum position u (completed / total optimizer steps) plus the seed
// for this example's random masking draw.
struct CurriculumState {
  double u = 0.0;
  uint64_t mask_seed = 0;
};

// rho = min(1, u / alpha): the masked fraction ramps linearly to 1 over the
// first alpha fraction of training.
double mask_ratio(double u, double alpha);

// Selects ceil(rho * L_eff) of the 1-based positions {1..L_eff}: a suffix
// under `end`, a prefix under `start`, a seeded uniform sample under
// `random`. Returned sorted ascending.
std::vector<size_t> select_masked_positions(size_t L_eff, double rho,
                                            MaskStrategy strategy,
                                            uint64_t seed);

// -(1/T) sum_t [c_t ln c_hat_t + (1-c_t) ln(1-c_hat_t)], with c_hat clamped
// to [1e-7, 1-1e-7] before the logs. c_hat may be [T,1] or [1,T].
Tensor routing_loss_bce(const Tensor& c_hat, const std::vector<double>& labels);

// L = L_route + lambda * L_resp.
Tensor joint_loss(const Tensor& route_loss, const Tensor& resp_loss,
                  double lambda);

struct LossParts {
  Tensor route;
  Tensor resp;   // scalar zero when the variant has no response loss
  Tensor joint;
};

// A router whose parameters can be trained by train_router and snapshotted
// into checkpoints.
class TrainableRouter : public Router {
 public:
  virtual LossParts example_loss(const RoutingExample& example,
                                 const CurriculumState& state) = 0;
  virtual std::vector<NamedTensor> named_parameters() = 0;
  virtual std::string config_json() const = 0;
  // Hidden-state extract used by the mutual-information probe.
  virtual std::vector<double> routing_state(const std::string& query) = 0;
};

CheckpointData snapshot_router(TrainableRouter& router, uint64_t seed,
                               uint64_t steps, double validation_score);
void restore_router(TrainableRouter& router, const CheckpointData& checkpoint);

// Sequence-level Lookahead: one causal pass over
//   x || MID_1 || ... || MID_T
// under the block-isolation mask; the hidden state at MID_t is the response
// latent r~_t, scored by a shared linear+sigmoid head. Training appends the
// observed responses after their MID tokens and adds a teacher-forced
// next-token loss.
class ClmRouter final : public TrainableRouter {
 public:
  ClmRouter(const LookaheadConfig& config, uint64_t init_seed);

  struct Prediction {
    Tensor latents;  // [T, d]
    Tensor scores;   // [T, 1] sigmoid outputs
  };
  Prediction predict_latents(const std::string& query) const;

  // Teacher-forced mean NLL of each response conditioned on x || MID_t,
  // averaged over models. An empty response contributes 0 with a warning.
  Tensor reconstruction_loss(const std::string& query,
                             const std::vector<std::string>& responses) const;

  LossParts example_loss(const RoutingExample& example,
                         const CurriculumState& state) override;
  RoutingDecision route(const std::string& query) override;
  std::vector<double> routing_state(const std::string& query) override;
  std::vector<NamedTensor> named_parameters() override;
  std::string config_json() const override;
  size_t num_models() const override { return config_.num_models; }
  std::string kind() const override { return "lookahead-clm"; }

  const LookaheadConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Transformer& backbone() const { return backbone_; }

 private:
  Tensor scores_from_latents(const Tensor& latents) const;

  LookaheadConfig config_;
  Vocabulary vocab_;
  Transformer backbone_;
  Tensor head_w_, head_b_;
};

// Token-level input for the MLM variant. Absolute indices address the full
// CLS || x || block_1 || ... || block_T sequence.
struct MlmInput {
  std::vector<int> tokens;
  std::vector<uint8_t> is_padding;
  std::vector<size_t> block_start;               // absolute index per block
  std::vector<std::vector<size_t>> loss_positions;  // per block, absolute
  std::vector<std::vector<int>> loss_targets;       // per block
};

// Absolute indices of the non-PAD response-block rows: the rows a pooling
// head may attend over.
std::vector<size_t> non_pad_block_rows(const MlmInput& input, size_t m);

// Builds the training input (responses given: masked subset of each block
// carries MID_t, the rest carry response tokens, PAD past a short response)
// or the inference input (responses empty: every block is m MID_t tokens).
MlmInput mlm_build_input(const Vocabulary& vocab, const std::string& query,
                         const std::vector<std::string>& responses, size_t m,
                         double rho, MaskStrategy strategy, uint64_t seed,
                         size_t max_seq, size_t max_query_bytes);

// Mean NLL over each block's masked positions (per-model mean, then averaged
// over all T blocks). Returns scalar 0 with a warning when no block has any
// masked position.
Tensor mlm_reconstruction_loss(const Transformer& model, const Tensor& hidden,
                               const std::vector<std::vector<size_t>>& loss_positions,
                               const std::vector<std::vector<int>>& loss_targets);

// Token-level Lookahead: bidirectional encoder over CLS || x || blocks; the
// CLS state attends over the block hidden states (attention pooling) and a
// two-layer MLP scores all T models from the pooled vector.
class MlmRouter final : public TrainableRouter {
 public:
  MlmRouter(const LookaheadConfig& config, uint64_t init_seed);

  struct Prediction {
    Tensor pooled;  // [1, d]
    Tensor scores;  // [1, T]
  };
  Prediction predict(const std::string& query) const;

  LossParts example_loss(const RoutingExample& example,
                         const CurriculumState& state) override;
  RoutingDecision route(const std::string& query) override;
  std::vector<double> routing_state(const std::string& query) override;
  std::vector<NamedTensor> named_parameters() override;
  std::string config_json() const override;
  size_t num_models() const override { return config_.num_models; }
  std::string kind() const override { return "lookahead-mlm"; }

  const LookaheadConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Transformer& backbone() const { return backbone_; }

 private:
  // Pools the CLS state over the non-PAD block rows of `hidden` and applies
  // the MLP head; shared by inference and the training loss.
  Tensor scores_from_hidden(const Tensor& hidden, const MlmInput& input,
                            Tensor* pooled_out) const;

  LookaheadConfig config_;
  Vocabulary vocab_;
  Transformer backbone_;
  AttentionPool pool_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

}  // namespace lahr
