#include "gapkit/margin.hpp"

#include <algorithm>
#include <cmath>

#include "gapkit/error.hpp"

namespace gapkit {

double layer_distance(double f_out, int y, double grad_norm, double total_variation, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("layer_distance: lambda must be positive");
  if (grad_norm < 0.0 || total_variation < 0.0)
    throw DomainError("layer_distance: norms must be non-negative");
  const double denom = lambda * (grad_norm + kMarginSmoothing) *
                       (std::sqrt(total_variation) + kMarginSmoothing);
  return lambda * std::tanh(static_cast<double>(y) * f_out / denom);
}

double total_variation(const Eigen::MatrixXd& activations) {
  if (activations.rows() == 0) throw DomainError("total_variation: empty activation list");
  const Eigen::RowVectorXd mean = activations.colwise().mean();
  return (activations.rowwise() - mean).array().square().colwise().mean().sum();
}

double total_variation(std::span<const Eigen::VectorXd> activations) {
  if (activations.empty()) throw DomainError("total_variation: empty activation list");
  const auto dim = activations.front().size();
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(activations.size()), dim);
  for (std::size_t i = 0; i < activations.size(); ++i) {
    if (activations[i].size() != dim) throw DomainError("total_variation: ragged activations");
    stacked.row(static_cast<Eigen::Index>(i)) = activations[i].transpose();
  }
  return total_variation(stacked);
}

SignatureRow percentiles(std::span<const double> values) {
  if (values.empty()) throw DomainError("percentiles: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double last = static_cast<double>(sorted.size() - 1);
  SignatureRow out{};
  for (std::size_t k = 0; k < kSignaturePercentiles.size(); ++k) {
    const double pos = kSignaturePercentiles[k] / 100.0 * last;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out[k] = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  }
  // Interpolation can break ties by an ulp; keep the row monotone.
  for (std::size_t k = 1; k < out.size(); ++k) out[k] = std::max(out[k], out[k - 1]);
  return out;
}

std::vector<double> layer_distances(const Network& net, const ForwardTrace& trace,
                                    const Eigen::VectorXd& labels, int layer, double lambda) {
  const auto& acts = trace.activations[static_cast<std::size_t>(layer)];
  const Eigen::VectorXd f = trace.activations.back().col(0);
  const double nu = total_variation(acts);
  const Eigen::MatrixXd grads = net.grad_wrt_activation(trace, layer);
  std::vector<double> out(static_cast<std::size_t>(acts.rows()));
  for (Eigen::Index i = 0; i < acts.rows(); ++i) {
    const int y = labels(i) > 0.0 ? 1 : -1;
    out[static_cast<std::size_t>(i)] = layer_distance(f(i), y, grads.row(i).norm(), nu, lambda);
  }
  return out;
}

SignatureMatrix extract_signature(const Network& net, const Dataset& train_data, double lambda) {
  if (train_data.empty()) throw DomainError("extract_signature: empty training set");
  if (!(lambda > 0.0)) throw DomainError("extract_signature: lambda must be positive");
  if (!net.is_finite()) throw DivergedError("extract_signature: network has diverged");
  const ForwardTrace trace = net.forward(inputs_of(train_data));
  const Eigen::VectorXd labels = labels_of(train_data);
  SignatureMatrix sig;
  sig.lambda = lambda;
  for (int l = 0; l < trace.num_layers(); ++l)
    sig.rows.push_back(percentiles(layer_distances(net, trace, labels, l, lambda)));
  return sig;
}

}  // namespace gapkit
