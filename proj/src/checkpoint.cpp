#include "lahr/checkpoint.hpp"

#include <map>

#include "lahr/errors.hpp"

namespace lahr {

TensorBlob quantize_tensor(const std::string& name, const Tensor& tensor) {
  TensorBlob blob;
  blob.name = name;
  blob.shape = tensor.shape();
  blob.data.reserve(tensor.size());
  for (double v : tensor.values()) {
    blob.data.push_back(static_cast<float>(v));
  }
  return blob;
}

void restore_tensor(Tensor& tensor, const TensorBlob& blob) {
  if (tensor.shape() != blob.shape) {
    throw ContractError("restore_tensor: shape mismatch for '" + blob.name +
                        "': model has " + shape_str(tensor.shape()) +
                        ", checkpoint has " + shape_str(blob.shape));
  }
  std::vector<double>& values = tensor.mutable_values();
  for (size_t i = 0; i < blob.data.size(); ++i) {
    values[i] = static_cast<double>(blob.data[i]);
  }
}

CheckpointData snapshot_parameters(const std::string& kind,
                                   const std::string& config_json,
                                   std::vector<NamedTensor> params) {
  CheckpointData ckpt;
  ckpt.kind = kind;
  ckpt.config_json = config_json;
  for (NamedTensor& np : params) {
    ckpt.tensors.push_back(quantize_tensor(np.name, np.tensor));
  }
  return ckpt;
}

void restore_parameters(std::vector<NamedTensor> params,
                        const CheckpointData& checkpoint) {
  std::map<std::string, const TensorBlob*> by_name;
  for (const TensorBlob& blob : checkpoint.tensors) {
    if (!by_name.emplace(blob.name, &blob).second) {
      throw ContractError("checkpoint holds tensor '" + blob.name + "' twice");
    }
  }
  if (by_name.size() != params.size()) {
    throw ContractError("checkpoint has " + std::to_string(by_name.size()) +
                        " tensors but the model has " +
                        std::to_string(params.size()));
  }
  for (NamedTensor& np : params) {
    auto it = by_name.find(np.name);
    if (it == by_name.end()) {
      throw ContractError("checkpoint is missing tensor '" + np.name + "'");
    }
    restore_tensor(np.tensor, *it->second);
  }
}

}  // namespace lahr
