#include "gapkit/tinynet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gapkit/error.hpp"

namespace gapkit {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

bool NetHparams::same_config(const NetHparams& other) const {
  return layer_widths == other.layer_widths && optimizer == other.optimizer &&
         learning_rate == other.learning_rate && batch_size == other.batch_size &&
         batch_norm == other.batch_norm && dropout_rate == other.dropout_rate;
}

struct Network::Cache {
  std::vector<MatrixXd> layer_inputs;  // a^{j-1} for j = 1..L+1
  std::vector<MatrixXd> xhat;          // hidden layers, batch norm only
  std::vector<RowVectorXd> inv_std;
  std::vector<RowVectorXd> batch_mean;
  std::vector<RowVectorXd> batch_var;
  std::vector<MatrixXd> relu_out;      // before dropout
  DropoutMasks masks;                  // empty matrix when dropout is inactive
  MatrixXd output;
};

Network::Network(const NetHparams& hparams) : hparams_(hparams) {
  if (hparams.layer_widths.empty()) throw DomainError("Network: at least one hidden layer required");
  for (int w : hparams.layer_widths)
    if (w < 1) throw DomainError("Network: layer widths must be positive");
  if (hparams.dropout_rate < 0.0 || hparams.dropout_rate >= 1.0)
    throw DomainError("Network: dropout rate must lie in [0, 1)");
  dims_.push_back(2);
  for (int w : hparams.layer_widths) dims_.push_back(w);
  dims_.push_back(1);

  const int L = depth();
  std::size_t p = 0;
  std::size_t m = 0;
  offsets_.resize(static_cast<std::size_t>(L + 1));
  for (int j = 1; j <= L + 1; ++j) {
    auto& off = offsets_[static_cast<std::size_t>(j - 1)];
    const auto fan_in = static_cast<std::size_t>(dims_[j - 1]);
    const auto fan_out = static_cast<std::size_t>(dims_[j]);
    off.kernel = p;
    p += fan_in * fan_out;
    off.bias = p;
    p += fan_out;
    if (hparams_.batch_norm && j <= L) {
      off.gamma = p;
      p += fan_out;
      off.beta = p;
      p += fan_out;
      off.moving_mean = m;
      m += fan_out;
      off.moving_var = m;
      m += fan_out;
    }
  }
  params_.assign(p, 0.0);
  moving_.assign(m, 0.0);
}

Network Network::init(const NetHparams& hparams, std::uint64_t init_seed) {
  Network net(hparams);
  Rng rng(init_seed);
  const int L = net.depth();
  for (int j = 1; j <= L + 1; ++j) {
    const double fan_in = net.dims_[j - 1];
    const double fan_out = net.dims_[j];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    auto w = net.kernel(j);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uniform(rng, -bound, bound);
    if (hparams.batch_norm && j <= L) {
      net.gamma(j).setOnes();
      net.moving_variance(j).setOnes();
    }
  }
  return net;
}

Network Network::from_parameters(const NetHparams& hparams, std::vector<double> params,
                                 std::vector<double> moving) {
  Network net(hparams);
  if (params.size() != net.params_.size() || moving.size() != net.moving_.size())
    throw DomainError("Network::from_parameters: parameter count does not match hparams");
  net.params_ = std::move(params);
  net.moving_ = std::move(moving);
  return net;
}

int Network::width(int layer) const {
  if (layer < 0 || layer > depth() + 1) throw DomainError("Network::width: layer out of range");
  return dims_[static_cast<std::size_t>(layer)];
}

void Network::check_layer(int layer, bool hidden_only) const {
  const int top = hidden_only ? depth() : depth() + 1;
  if (layer < 1 || layer > top)
    throw DomainError("Network: layer " + std::to_string(layer) + " out of range");
  if (hidden_only && !hparams_.batch_norm) throw DomainError("Network: batch norm is disabled");
}

Network::Map Network::kernel(int layer) {
  check_layer(layer, false);
  const auto& off = offsets_[static_cast<std::size_t>(layer - 1)];
  return Map(params_.data() + off.kernel, dims_[layer - 1], dims_[layer]);
}
Network::ConstMap Network::kernel(int layer) const {
  check_layer(layer, false);
  const auto& off = offsets_[static_cast<std::size_t>(layer - 1)];
  return ConstMap(params_.data() + off.kernel, dims_[layer - 1], dims_[layer]);
}
Network::VecMap Network::bias(int layer) {
  check_layer(layer, false);
  return VecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].bias, dims_[layer]);
}
Network::ConstVecMap Network::bias(int layer) const {
  check_layer(layer, false);
  return ConstVecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].bias,
                     dims_[layer]);
}
Network::VecMap Network::gamma(int layer) {
  check_layer(layer, true);
  return VecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].gamma, dims_[layer]);
}
Network::ConstVecMap Network::gamma(int layer) const {
  check_layer(layer, true);
  return ConstVecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].gamma,
                     dims_[layer]);
}
Network::VecMap Network::beta(int layer) {
  check_layer(layer, true);
  return VecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].beta, dims_[layer]);
}
Network::ConstVecMap Network::beta(int layer) const {
  check_layer(layer, true);
  return ConstVecMap(params_.data() + offsets_[static_cast<std::size_t>(layer - 1)].beta,
                     dims_[layer]);
}
Network::VecMap Network::moving_mean(int layer) {
  check_layer(layer, true);
  return VecMap(moving_.data() + offsets_[static_cast<std::size_t>(layer - 1)].moving_mean,
                dims_[layer]);
}
Network::ConstVecMap Network::moving_mean(int layer) const {
  check_layer(layer, true);
  return ConstVecMap(moving_.data() + offsets_[static_cast<std::size_t>(layer - 1)].moving_mean,
                     dims_[layer]);
}
Network::VecMap Network::moving_variance(int layer) {
  check_layer(layer, true);
  return VecMap(moving_.data() + offsets_[static_cast<std::size_t>(layer - 1)].moving_var,
                dims_[layer]);
}
Network::ConstVecMap Network::moving_variance(int layer) const {
  check_layer(layer, true);
  return ConstVecMap(moving_.data() + offsets_[static_cast<std::size_t>(layer - 1)].moving_var,
                     dims_[layer]);
}

namespace {

bool within_float32(double v) { return std::isfinite(v) && std::abs(v) <= kFloat32Max; }

}  // namespace

bool Network::is_finite() const {
  return std::all_of(params_.begin(), params_.end(), within_float32) &&
         std::all_of(moving_.begin(), moving_.end(), within_float32);
}

void Network::run(const MatrixXd& inputs, Mode mode, Rng* rng, const DropoutMasks* frozen_masks,
                  Cache& cache) const {
  if (inputs.cols() != 2) throw DomainError("Network::forward: inputs must have 2 columns");
  const int L = depth();
  const bool training = mode == Mode::kTraining;
  const double p = hparams_.dropout_rate;
  const bool dropout = training && p > 0.0 && (rng != nullptr || frozen_masks != nullptr);
  if (frozen_masks != nullptr && dropout && static_cast<int>(frozen_masks->size()) != L)
    throw DomainError("Network::forward: one dropout mask per hidden layer required");

  const auto n = inputs.rows();
  cache = Cache{};
  cache.layer_inputs.reserve(static_cast<std::size_t>(L + 1));
  MatrixXd a = inputs;
  for (int j = 1; j <= L; ++j) {
    cache.layer_inputs.push_back(a);
    MatrixXd z = a * kernel(j);
    z.rowwise() += bias(j).transpose();
    if (hparams_.batch_norm) {
      RowVectorXd mean;
      RowVectorXd var;
      if (training) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean();
      } else {
        mean = moving_mean(j).transpose();
        var = moving_variance(j).transpose();
      }
      RowVectorXd inv_std = (var.array() + kBatchNormEpsilon).rsqrt();
      MatrixXd xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
      z = (xhat.array().rowwise() * gamma(j).transpose().array()).matrix();
      z.rowwise() += beta(j).transpose();
      cache.xhat.push_back(std::move(xhat));
      cache.inv_std.push_back(std::move(inv_std));
      cache.batch_mean.push_back(std::move(mean));
      cache.batch_var.push_back(std::move(var));
    }
    MatrixXd r = z.cwiseMax(0.0);
    if (dropout) {
      MatrixXd mask;
      if (frozen_masks != nullptr) {
        mask = (*frozen_masks)[static_cast<std::size_t>(j - 1)];
        if (mask.rows() != n || mask.cols() != r.cols())
          throw DomainError("Network::forward: dropout mask shape mismatch");
      } else {
        mask.resize(n, r.cols());
        const double keep_scale = 1.0 / (1.0 - p);
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
          for (Eigen::Index i = 0; i < n; ++i)
            mask(i, c) = uniform01(*rng) < p ? 0.0 : keep_scale;
      }
      a = r.cwiseProduct(mask);
      cache.masks.push_back(std::move(mask));
    } else {
      a = r;
      cache.masks.emplace_back();
    }
    cache.relu_out.push_back(std::move(r));
  }
  cache.layer_inputs.push_back(a);
  cache.output = a * kernel(L + 1);
  cache.output.rowwise() += bias(L + 1).transpose();
}

ForwardTrace Network::forward(const MatrixXd& inputs, Mode mode, Rng* rng,
                              const DropoutMasks* frozen_masks) const {
  if (!is_finite()) throw DivergedError("Network::forward: parameters are not finite");
  Cache cache;
  run(inputs, mode, rng, frozen_masks, cache);
  ForwardTrace trace;
  trace.activations = std::move(cache.layer_inputs);
  trace.activations.push_back(std::move(cache.output));
  return trace;
}

ForwardTrace Network::forward(const MatrixXd& inputs) const {
  return forward(inputs, Mode::kInference, nullptr);
}

ForwardTrace Network::forward(Point2 input) const {
  MatrixXd x(1, 2);
  x << input.x, input.y;
  return forward(x);
}

double Network::output(Point2 input) const {
  return forward(input).activations.back()(0, 0);
}

VectorXd Network::outputs(const MatrixXd& inputs) const {
  if (!is_finite()) throw DivergedError("Network::outputs: parameters are not finite");
  Cache cache;
  run(inputs, Mode::kInference, nullptr, nullptr, cache);
  return cache.output.col(0);
}

double Network::output_from_layer(int layer, const VectorXd& activation) const {
  const int L = depth();
  if (layer < 0 || layer > L + 1) throw DomainError("output_from_layer: layer out of range");
  if (activation.size() != dims_[static_cast<std::size_t>(layer)])
    throw DomainError("output_from_layer: activation width mismatch");
  if (layer == L + 1) return activation(0);
  RowVectorXd a = activation.transpose();
  for (int j = layer + 1; j <= L; ++j) {
    RowVectorXd z = a * kernel(j) + bias(j).transpose();
    if (hparams_.batch_norm) {
      const RowVectorXd inv_std =
          (moving_variance(j).transpose().array() + kBatchNormEpsilon).rsqrt();
      z = ((z - moving_mean(j).transpose()).array() * inv_std.array() *
               gamma(j).transpose().array() +
           beta(j).transpose().array())
              .matrix();
    }
    a = z.cwiseMax(0.0);
  }
  return (a * kernel(L + 1))(0, 0) + bias(L + 1)(0);
}

MatrixXd Network::grad_wrt_activation(const ForwardTrace& trace, int layer) const {
  const int L = depth();
  if (layer < 0 || layer > L + 1)
    throw DomainError("grad_wrt_activation: layer " + std::to_string(layer) + " out of range");
  if (trace.num_layers() != L + 2) throw DomainError("grad_wrt_activation: trace depth mismatch");
  const auto n = trace.activations.front().rows();
  MatrixXd g = MatrixXd::Ones(n, 1);
  for (int j = L + 1; j > layer; --j) {
    if (j <= L) {
      const auto& act = trace.activations[static_cast<std::size_t>(j)];
      g = g.cwiseProduct((act.array() > 0.0).cast<double>().matrix());
      if (hparams_.batch_norm) {
        const RowVectorXd scale =
            gamma(j).transpose().array() *
            (moving_variance(j).transpose().array() + kBatchNormEpsilon).rsqrt();
        g = (g.array().rowwise() * scale.array()).matrix();
      }
    }
    g = g * kernel(j).transpose();
  }
  return g;
}

VectorXd Network::grad_wrt_activation(const ForwardTrace& trace, int layer, int row) const {
  const MatrixXd g = grad_wrt_activation(trace, layer);
  if (row < 0 || row >= g.rows()) throw DomainError("grad_wrt_activation: row out of range");
  return g.row(row).transpose();
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossAndGradient Network::loss_and_gradient(const MatrixXd& inputs, const VectorXd& labels, Mode mode,
                                           Rng* rng, const DropoutMasks* frozen_masks,
                                           std::vector<double>* batch_stats) const {
  const auto n = inputs.rows();
  if (n == 0 || labels.size() != n) throw DomainError("loss_and_gradient: batch shape mismatch");
  Cache cache;
  run(inputs, mode, rng, frozen_masks, cache);
  const int L = depth();
  const bool training = mode == Mode::kTraining;

  LossAndGradient out;
  out.grad.assign(params_.size(), 0.0);
  MatrixXd g(n, 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = cache.output(i, 0);
    const double t = labels(i) > 0.0 ? 1.0 : 0.0;
    loss += softplus(f) - t * f;
    g(i, 0) = (sigmoid(f) - t) / static_cast<double>(n);
  }
  out.loss = loss / static_cast<double>(n);

  auto grad_kernel = [&](int j) {
    const auto& off = offsets_[static_cast<std::size_t>(j - 1)];
    return Map(out.grad.data() + off.kernel, dims_[j - 1], dims_[j]);
  };
  auto grad_vec = [&](std::size_t offset, int j) {
    return VecMap(out.grad.data() + offset, dims_[j]);
  };

  for (int j = L + 1; j >= 1; --j) {
    const auto& off = offsets_[static_cast<std::size_t>(j - 1)];
    const auto h = static_cast<std::size_t>(j - 1);
    if (j <= L) {
      if (cache.masks[h].size() > 0) g = g.cwiseProduct(cache.masks[h]);
      g = g.cwiseProduct((cache.relu_out[h].array() > 0.0).cast<double>().matrix());
      if (hparams_.batch_norm) {
        const MatrixXd& xhat = cache.xhat[h];
        grad_vec(off.gamma, j) = g.cwiseProduct(xhat).colwise().sum().transpose();
        grad_vec(off.beta, j) = g.colwise().sum().transpose();
        MatrixXd dxhat = (g.array().rowwise() * gamma(j).transpose().array()).matrix();
        if (training) {
          const double nn = static_cast<double>(n);
          const RowVectorXd sum_dxhat = dxhat.colwise().sum();
          const RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
          MatrixXd centered = nn * dxhat;
          centered.rowwise() -= sum_dxhat;
          centered -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
          g = (centered.array().rowwise() * (cache.inv_std[h].array() / nn)).matrix();
        } else {
          g = (dxhat.array().rowwise() * cache.inv_std[h].array()).matrix();
        }
      }
    }
    const MatrixXd& a_prev = cache.layer_inputs[h];
    grad_kernel(j) = a_prev.transpose() * g;
    grad_vec(off.bias, j) = g.colwise().sum().transpose();
    if (j > 1) g = g * kernel(j).transpose();
  }

  if (batch_stats != nullptr) {
    batch_stats->clear();
    for (std::size_t h = 0; h < cache.batch_mean.size(); ++h) {
      for (Eigen::Index c = 0; c < cache.batch_mean[h].size(); ++c)
        batch_stats->push_back(cache.batch_mean[h](c));
      for (Eigen::Index c = 0; c < cache.batch_var[h].size(); ++c)
        batch_stats->push_back(cache.batch_var[h](c));
    }
  }
  return out;
}

void Network::update_moving_statistics(std::span<const double> batch_stats) {
  if (batch_stats.size() != moving_.size())
    throw DomainError("update_moving_statistics: size mismatch");
  for (std::size_t i = 0; i < moving_.size(); ++i)
    moving_[i] = kBatchNormMomentum * moving_[i] + (1.0 - kBatchNormMomentum) * batch_stats[i];
}

MatrixXd inputs_of(const Dataset& data) {
  MatrixXd x(static_cast<Eigen::Index>(data.size()), 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = data.points[i].x;
    x(static_cast<Eigen::Index>(i), 1) = data.points[i].y;
  }
  return x;
}

VectorXd labels_of(const Dataset& data) {
  VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = static_cast<double>(data.points[i].label);
  return y;
}

TrainOutcome train(Network net, const Dataset& data, int steps, std::uint64_t train_seed,
                   const TrainOptions& options) {
  if (data.empty()) throw DomainError("train: empty dataset");
  if (steps < 1) throw DomainError("train: steps must be >= 1, got " + std::to_string(steps));

  const MatrixXd x = inputs_of(data);
  const VectorXd y = labels_of(data);
  const auto m = static_cast<Eigen::Index>(data.size());
  const Eigen::Index batch = std::min<Eigen::Index>(net.hparams().batch_size, m);

  OptimizerConfig opt_config;
  opt_config.kind = net.hparams().optimizer;
  opt_config.learning_rate = options.learning_rate_override.value_or(net.hparams().learning_rate);
  OptState opt(opt_config, net.parameters().size());

  Rng rng(train_seed);
  MatrixXd bx(batch, 2);
  VectorXd by(batch);
  std::vector<double> stats;
  TrainOutcome outcome{net, false, 0, 0.0};
  for (int step = 1; step <= steps; ++step) {
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto idx = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(m)));
      bx.row(i) = x.row(idx);
      by(i) = y(idx);
    }
    const LossAndGradient lg = net.loss_and_gradient(bx, by, Mode::kTraining, &rng, nullptr, &stats);
    opt.step(net.parameters(), lg.grad);
    if (net.hparams().batch_norm) net.update_moving_statistics(stats);
    outcome.final_loss = lg.loss;
    outcome.steps_run = step;
    if (step % kDivergenceCheckInterval == 0 || step == steps) {
      if (!within_float32(lg.loss) || !net.is_finite()) {
        outcome.diverged = true;
        break;
      }
    }
  }
  outcome.net = std::move(net);
  return outcome;
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.empty()) throw DomainError("accuracy: empty dataset");
  const VectorXd f = net.outputs(inputs_of(data));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = f(static_cast<Eigen::Index>(i));
    if ((v > 0.0 && data.points[i].label > 0) || (v < 0.0 && data.points[i].label < 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace gapkit
