#include "gapkit/optim.hpp"

#include <cmath>

#include "gapkit/error.hpp"

namespace gapkit {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdagrad: return "adagrad";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "adagrad") return OptimizerKind::kAdagrad;
  throw DomainError("unknown optimizer '" + name + "'");
}

OptState::OptState(OptimizerConfig config, std::size_t num_params) : config_(config) {
  switch (config_.kind) {
    case OptimizerKind::kSgd:
      break;
    case OptimizerKind::kAdam:
      first_.assign(num_params, 0.0);
      second_.assign(num_params, 0.0);
      break;
    case OptimizerKind::kAdagrad:
      first_.assign(num_params, config_.adagrad_initial_accumulator);
      break;
  }
}

void OptState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw DomainError("OptState::step: size mismatch");
  ++steps_;
  const double lr = config_.learning_rate;
  switch (config_.kind) {
    case OptimizerKind::kSgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
      break;
    case OptimizerKind::kAdam: {
      if (first_.size() != params.size()) throw DomainError("OptState::step: state size mismatch");
      const double b1 = config_.adam_beta1;
      const double b2 = config_.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        first_[i] = b1 * first_[i] + (1.0 - b1) * grads[i];
        second_[i] = b2 * second_[i] + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = first_[i] / c1;
        const double v_hat = second_[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.adam_epsilon);
      }
      break;
    }
    case OptimizerKind::kAdagrad:
      if (first_.size() != params.size()) throw DomainError("OptState::step: state size mismatch");
      for (std::size_t i = 0; i < params.size(); ++i) {
        first_[i] += grads[i] * grads[i];
        params[i] -= lr * grads[i] / (std::sqrt(first_[i]) + config_.adagrad_epsilon);
      }
      break;
  }
}

}  // namespace gapkit
