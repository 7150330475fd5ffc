#include "lahr/optim.hpp"

#include <cmath>

namespace lahr {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (params_.empty()) throw ContractError("AdamW: no parameters");
  for (const Tensor& p : params_) {
    if (!p.defined() || !p.requires_grad()) {
      throw ContractError("AdamW: every parameter must require grad");
    }
  }
  if (!(config_.lr >= 0.0) || !(config_.eps > 0.0) ||
      !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) ||
      !(config_.weight_decay >= 0.0)) {
    throw ContractError("AdamW: invalid hyperparameters");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::set_lr(double lr) {
  if (!(lr >= 0.0)) throw ContractError("AdamW::set_lr: negative rate");
  config_.lr = lr;
}

void AdamW::step() {
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    std::vector<double>& w = p.mutable_values();
    const std::vector<double>* g = p.has_grad() ? &p.grad() : nullptr;
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= config_.lr *
              (m_hat / (std::sqrt(v_hat) + config_.eps) +
               config_.weight_decay * w[i]);
      if (!std::isfinite(w[i])) {
        throw NumericError("AdamW::step: parameter became non-finite at step " +
                           std::to_string(step_));
      }
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double lr_at(const LrSchedule& schedule, size_t step) {
  if (schedule.total_steps == 0) {
    throw ContractError("lr_at: schedule has zero total steps");
  }
  if (schedule.warmup_steps >= schedule.total_steps) {
    throw ContractError("lr_at: warmup must be shorter than the schedule");
  }
  if (!(schedule.base_lr >= schedule.min_lr && schedule.min_lr >= 0.0)) {
    throw ContractError("lr_at: require base_lr >= min_lr >= 0");
  }
  if (step > schedule.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) +
                        " beyond schedule of " +
                        std::to_string(schedule.total_steps));
  }
  if (step < schedule.warmup_steps) {
    return schedule.base_lr * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - schedule.warmup_steps) /
      static_cast<double>(schedule.total_steps - schedule.warmup_steps);
  if (schedule.decay == LrSchedule::Decay::cosine) {
    const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 *
                                                progress));
    return schedule.min_lr + (schedule.base_lr - schedule.min_lr) * cosine;
  }
  return schedule.base_lr +
         (schedule.min_lr - schedule.base_lr) * progress;
}

LrSchedule make_warmup_cosine(double base_lr, size_t total_steps,
                              double min_lr) {
  LrSchedule s;
  s.base_lr = base_lr;
  s.total_steps = total_steps;
  s.warmup_steps = total_steps / 10;
  s.min_lr = min_lr;
  s.decay = LrSchedule::Decay::cosine;
  return s;
}

}  // namespace lahr
