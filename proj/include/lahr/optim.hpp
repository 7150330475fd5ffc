#pragma once

#include <cstddef>
#include <vector>

#include "lahr/tensor.hpp"

namespace lahr {

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
//   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
// where m_hat, v_hat carry the usual bias correction. Decay is applied even
// when the gradient is zero, so a parameter with g = 0 shrinks by
// exactly lr * wd * w per step from a fresh state.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config = {});

  void set_lr(double lr);
  double lr() const { return config_.lr; }
  size_t step_count() const { return step_; }

  // Applies one update using the current .grad of every parameter. A missing
  // grad buffer is treated as all zeros.
  void step();
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  size_t step_ = 0;
};

struct LrSchedule {
  enum class Decay { cosine, linear };

  double base_lr = 5e-5;
  size_t total_steps = 0;
  size_t warmup_steps = 0;  // linear ramp 0 -> base over these steps
  double min_lr = 0.0;
  Decay decay = Decay::cosine;
};

// Learning rate at an optimizer step in [0, total]. Piecewise continuous:
// linear warmup to base_lr at warmup_steps, then decay to min_lr at
// total_steps.
double lr_at(const LrSchedule& schedule, size_t step);

// Convenience: warmup fixed at 10% of total (rounded down), cosine decay.
LrSchedule make_warmup_cosine(double base_lr, size_t total_steps,
                              double min_lr = 0.0);

}  // namespace lahr
