#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lahr/tensor.hpp"
#include "lahr/transformer.hpp"

namespace lahr {

// One named weight tensor stored at 32-bit precision.
struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// In-memory checkpoint: what gets serialized to disk and what a router is
// rebuilt from. Weights are quantized to 32-bit at snapshot time, so routing
// from a snapshot equals routing from its saved-and-reloaded copy bit for
// bit.
struct CheckpointData {
  std::string kind;         // e.g. "lookahead-mlm", "mlc-clm", "zooter"
  std::string config_json;  // kind-specific configuration record
  uint64_t seed = 0;
  uint64_t steps = 0;
  double validation_score = 0.0;
  std::vector<TensorBlob> tensors;
};

TensorBlob quantize_tensor(const std::string& name, const Tensor& tensor);

// Widens the blob back into the tensor (shape must match exactly).
void restore_tensor(Tensor& tensor, const TensorBlob& blob);

CheckpointData snapshot_parameters(const std::string& kind,
                                   const std::string& config_json,
                                   std::vector<NamedTensor> params);

// Restores every parameter by name; missing or extra names are errors.
void restore_parameters(std::vector<NamedTensor> params,
                        const CheckpointData& checkpoint);

}  // namespace lahr
