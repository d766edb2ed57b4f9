#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gapkit/optim.hpp"
#include "gapkit/rng.hpp"
#include "gapkit/spiral.hpp"

namespace gapkit {

// One sampled architecture/optimizer configuration.
struct NetHparams {
  std::vector<int> layer_widths{8};
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double learning_rate = 0.01;
  int batch_size = 32;
  bool batch_norm = false;
  double dropout_rate = 0.0;
  int hparam_id = 0;

  int depth() const { return static_cast<int>(layer_widths.size()); }
  // Equality of everything except hparam_id.
  bool same_config(const NetHparams& other) const;
};

enum class Mode { kTraining, kInference };

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kFloat32Max = 3.4028234663852886e38;
inline constexpr int kDivergenceCheckInterval = 100;

// Activations x^0 (input) .. x^{L+1} (scalar output); row i belongs to input i.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;

  int num_layers() const { return static_cast<int>(activations.size()); }
};

// Per hidden layer dropout multipliers (0 or 1/(1-p)), rows = batch.
using DropoutMasks = std::vector<Eigen::MatrixXd>;

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as Network::parameters()
};

// Fully-connected classifier 2 -> widths... -> 1 with a scalar logit.
// Hidden layer: affine -> batch norm (optional) -> ReLU -> dropout (training).
//
// Trainable parameters live in one flat vector, per layer j = 1..L+1:
// kernel (fan_in x fan_out, column-major), bias, then gamma and beta for
// hidden layers when batch norm is enabled. Moving statistics are stored
// separately since they are not trained by gradient descent.
class Network {
 public:
  using Map = Eigen::Map<Eigen::MatrixXd>;
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  // Glorot-uniform kernels, zero biases, gamma 1, beta 0, moving mean 0 and
  // moving variance 1.
  static Network init(const NetHparams& hparams, std::uint64_t init_seed);

  const NetHparams& hparams() const { return hparams_; }
  int depth() const { return hparams_.depth(); }
  // Width of activation layer l in 0..L+1.
  int width(int layer) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> moving_statistics() { return moving_; }
  std::span<const double> moving_statistics() const { return moving_; }

  // Layer j in 1..L+1.
  Map kernel(int layer);
  ConstMap kernel(int layer) const;
  VecMap bias(int layer);
  ConstVecMap bias(int layer) const;
  // Hidden layer j in 1..L, batch norm only.
  VecMap gamma(int layer);
  ConstVecMap gamma(int layer) const;
  VecMap beta(int layer);
  ConstVecMap beta(int layer) const;
  VecMap moving_mean(int layer);
  ConstVecMap moving_mean(int layer) const;
  VecMap moving_variance(int layer);
  ConstVecMap moving_variance(int layer) const;

  // Finite and inside the float32 range.
  bool is_finite() const;

  // Inference mode: moving batch-norm statistics, no dropout.
  ForwardTrace forward(const Eigen::MatrixXd& inputs) const;
  ForwardTrace forward(Point2 input) const;
  // Training mode: batch statistics and dropout. Masks are drawn from rng
  // unless frozen masks are given.
  ForwardTrace forward(const Eigen::MatrixXd& inputs, Mode mode, Rng* rng,
                       const DropoutMasks* frozen_masks = nullptr) const;

  double output(Point2 input) const;
  Eigen::VectorXd outputs(const Eigen::MatrixXd& inputs) const;

  // Inference-mode evaluation of f starting from layer-l activations.
  double output_from_layer(int layer, const Eigen::VectorXd& activation) const;

  // d f / d x^l for every row of an inference-mode trace (rows = points).
  Eigen::MatrixXd grad_wrt_activation(const ForwardTrace& trace, int layer) const;
  // Single-row convenience.
  Eigen::VectorXd grad_wrt_activation(const ForwardTrace& trace, int layer, int row) const;

  // Mean sigmoid cross-entropy of the logit against labels in {-1,+1} and its
  // gradient over parameters(). In training mode batch statistics are used;
  // dropout masks come from `frozen_masks` if given, else from rng (or no
  // dropout if both are null). If `batch_stats` is non-null the per-layer
  // batch means and variances are written to it (mean then variance per layer).
  LossAndGradient loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& labels,
                                    Mode mode, Rng* rng = nullptr,
                                    const DropoutMasks* frozen_masks = nullptr,
                                    std::vector<double>* batch_stats = nullptr) const;

  // Blend batch statistics into the moving averages with kBatchNormMomentum.
  void update_moving_statistics(std::span<const double> batch_stats);

  // Rebuild from a stored parameter vector (checkpoint).
  static Network from_parameters(const NetHparams& hparams, std::vector<double> params,
                                 std::vector<double> moving);

 private:
  struct LayerOffsets {
    std::size_t kernel = 0;
    std::size_t bias = 0;
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t moving_mean = 0;
    std::size_t moving_var = 0;
  };
  struct Cache;

  explicit Network(const NetHparams& hparams);
  void check_layer(int layer, bool hidden_only) const;
  void run(const Eigen::MatrixXd& inputs, Mode mode, Rng* rng, const DropoutMasks* frozen_masks,
           Cache& cache) const;

  NetHparams hparams_;
  std::vector<int> dims_;  // 2, widths..., 1
  std::vector<LayerOffsets> offsets_;  // index j-1 for layer j
  std::vector<double> params_;
  std::vector<double> moving_;
};

struct TrainOutcome {
  Network net;
  bool diverged = false;
  int steps_run = 0;
  double final_loss = 0.0;
};

struct TrainOptions {
  // Replaces hparams.learning_rate when set (fault injection).
  std::optional<double> learning_rate_override;
};

// Mini-batch training of sigmoid cross-entropy, batches of min(batch_size, m)
// drawn with replacement. Stops early with diverged=true when the loss or any
// parameter leaves the finite float32 range (checked every 100 steps and at
// the end).
TrainOutcome train(Network net, const Dataset& data, int steps, std::uint64_t train_seed,
                   const TrainOptions& options = {});

// Fraction of points with sign(f(x)) == label; f(x) == 0 counts as wrong.
double accuracy(const Network& net, const Dataset& data);

Eigen::MatrixXd inputs_of(const Dataset& data);
Eigen::VectorXd labels_of(const Dataset& data);

}  // namespace gapkit
