#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gapkit {

enum class OptimizerKind { kSgd, kAdam, kAdagrad };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double adagrad_initial_accumulator = 0.1;
  double adagrad_epsilon = 1e-7;
};

// Per-parameter optimizer state over a flat parameter vector. Accumulators
// mirror the parameter layout; Adam moments start at zero.
class OptState {
 public:
  OptState(OptimizerConfig config, std::size_t num_params);

  void step(std::span<double> params, std::span<const double> grads);

  const OptimizerConfig& config() const { return config_; }
  std::int64_t steps_taken() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<double> first_;   // adam m, adagrad accumulator
  std::vector<double> second_;  // adam v
  std::int64_t steps_ = 0;
};

}  // namespace gapkit
