#include <cmath>

#include "gain/error.hpp"
#include "gain/nn.hpp"

namespace gain {

double poly_lr(const LrSchedule& s, long iter) {
  if (s.max_iter <= 0) throw ValidationError("poly_lr: max_iter must be positive");
  if (iter < 0 || iter > s.max_iter) {
    throw ValidationError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                          std::to_string(s.max_iter) + "]");
  }
  const double remaining = 1.0 - static_cast<double>(iter) / static_cast<double>(s.max_iter);
  return s.lr0 * std::pow(remaining, s.power);
}

void sgd_step(std::span<double> param, std::span<const double> grad,
              std::span<double> velocity, double lr, const SgdConfig& cfg) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw ValidationError("sgd_step: parameter, gradient and velocity sizes differ (" +
                          std::to_string(param.size()) + ", " + std::to_string(grad.size()) +
                          ", " + std::to_string(velocity.size()) + ")");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void Sgd::step(std::span<Tensor> params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    sgd_step(params[i].mutable_data(), params[i].grad(), velocity_[i], lr, cfg_);
  }
}

}  // namespace gain
