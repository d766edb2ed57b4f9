#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gapkit/margin.hpp"
#include "gapkit/optim.hpp"

namespace gapkit {

enum class GgpFamily { kLinear, kDnn, kRnn };
// Dataset-dependent: one predictor per spiral variation. Dataset-independent:
// one predictor across all variations.
enum class TaskMode { kDatasetDependent, kDatasetIndependent };

std::string to_string(GgpFamily family);
GgpFamily family_from_string(const std::string& name);
std::string to_string(TaskMode mode);

struct GgpExample {
  SignatureMatrix signature;
  double label = 0.0;
  std::int64_t net_id = 0;
  int variation_id = 0;
  std::int64_t data_seed = 0;
  int hparam_id = 0;
};

// Trainer settings. Defaults are the published ones; tests shrink step counts.
struct GgpTrainerConfig {
  double lambda_dependent = 0.5;
  double lambda_independent = 2.5;
  int dnn_steps_dependent = 5000;
  int dnn_steps_independent = 25000;
  int rnn_steps_dependent = 2500;
  int rnn_steps_independent = 25000;
  int batch_size = 64;
  int hidden_units = 16;
  int dense_layers = 3;
  OptimizerConfig optimizer{OptimizerKind::kAdagrad, 0.1, 0.9, 0.999, 1e-8, 0.1, 1e-7};
  std::uint64_t seed = 0;

  double expected_lambda(TaskMode mode) const {
    return mode == TaskMode::kDatasetDependent ? lambda_dependent : lambda_independent;
  }
  int dnn_steps(TaskMode mode) const {
    return mode == TaskMode::kDatasetDependent ? dnn_steps_dependent : dnn_steps_independent;
  }
  int rnn_steps(TaskMode mode) const {
    return mode == TaskMode::kDatasetDependent ? rnn_steps_dependent : rnn_steps_independent;
  }
};

// Elementwise sum of the signature rows.
SignatureRow aggregate_sum(const SignatureMatrix& signature);

// ReLU MLP with a linear scalar output: dims = {in, h, ..., h, 1}. Parameters
// are flat, per layer kernel (column-major) then bias.
struct DenseStack {
  std::vector<int> dims;
  std::vector<double> params;

  static DenseStack init(std::vector<int> dims, Rng& rng);
  std::size_t num_params() const;
  int num_layers() const { return static_cast<int>(dims.size()) - 1; }

  Eigen::Map<const Eigen::MatrixXd> kernel(int layer) const;  // layer in 0..num_layers-1
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  // Rows are samples. `acts` receives the input and every post-ReLU activation.
  Eigen::VectorXd forward(const Eigen::MatrixXd& inputs,
                          std::vector<Eigen::MatrixXd>* acts = nullptr) const;
  // Accumulates parameter gradients into `grad` (same layout as params) and
  // returns d loss / d inputs.
  Eigen::MatrixXd backward(const std::vector<Eigen::MatrixXd>& acts, const Eigen::VectorXd& dout,
                           std::span<double> grad) const;
};

struct LinearGgp {
  std::array<double, 5> coefficients{};
  double intercept = 0.0;
  bool rank_deficient = false;
};

struct DnnGgp {
  DenseStack net;
};

// Elman cell h_t = tanh(x_t Wx + h_{t-1} Wh + b), h_0 = 0, rows fed input
// layer first; the final hidden state feeds a dense head.
struct RnnGgp {
  int hidden = 16;
  std::vector<double> cell;  // Wx (5 x hidden), Wh (hidden x hidden), b (hidden)
  DenseStack head;

  static RnnGgp init(int hidden, int dense_layers, Rng& rng);
  std::size_t num_params() const { return cell.size() + head.num_params(); }
  Eigen::RowVectorXd final_state(const SignatureMatrix& signature) const;
  double predict(const SignatureMatrix& signature) const;

  // Mean squared error over the batch and its gradient over [cell, head.params].
  // Examples of different lengths are grouped internally; no padding.
  double loss_and_gradient(const std::vector<const GgpExample*>& batch,
                           std::vector<double>& grad) const;
  void set_params(std::span<const double> flat);
  std::vector<double> flat_params() const;
};

struct FitReport {
  int steps = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
};

class GgpModel {
 public:
  using Body = std::variant<LinearGgp, DnnGgp, RnnGgp>;

  GgpModel(Body body, double lambda, FitReport report = {});

  GgpFamily family() const;
  double lambda() const { return lambda_; }
  const Body& body() const { return body_; }
  const FitReport& fit_report() const { return report_; }

  // Throws ConfigError when the signature was extracted with another lambda.
  double predict(const SignatureMatrix& signature) const;

  std::string to_json() const;
  static GgpModel from_json(const std::string& text);

 private:
  Body body_;
  double lambda_;
  FitReport report_;
};

// OLS with intercept over summed signatures. Least-norm solution when the
// design is rank deficient (flagged on the model).
GgpModel fit_linear(const std::vector<GgpExample>& examples);

GgpModel fit_dnn(const std::vector<GgpExample>& examples, TaskMode mode,
                 const GgpTrainerConfig& config = {});

GgpModel fit_rnn(const std::vector<GgpExample>& examples, TaskMode mode,
                 const GgpTrainerConfig& config = {});

GgpModel fit(GgpFamily family, const std::vector<GgpExample>& examples, TaskMode mode,
             const GgpTrainerConfig& config = {});

// Minimum training examples a family needs.
std::size_t min_training_examples(GgpFamily family);

}  // namespace gapkit
