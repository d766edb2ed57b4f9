#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gapkit/spiral.hpp"
#include "gapkit/tinynet.hpp"

namespace gapkit {

inline constexpr double kMarginSmoothing = 1e-6;
inline constexpr std::array<double, 5> kSignaturePercentiles{5.0, 25.0, 50.0, 75.0, 95.0};

using SignatureRow = std::array<double, 5>;

// Per-layer percentile signature: rows theta_0 .. theta_{L+1}.
struct SignatureMatrix {
  std::vector<SignatureRow> rows;
  double lambda = 0.5;

  int num_rows() const { return static_cast<int>(rows.size()); }
  bool operator==(const SignatureMatrix&) const = default;
};

// lambda * tanh(y f / (lambda (|grad| + eps) (sqrt(nu) + eps))).
double layer_distance(double f_out, int y, double grad_norm, double total_variation, double lambda);

// Sum over coordinates of the population variance across rows.
double total_variation(const Eigen::MatrixXd& activations);
double total_variation(std::span<const Eigen::VectorXd> activations);

// {5,25,50,75,95}th percentiles, linear interpolation at index p/100 (n-1).
SignatureRow percentiles(std::span<const double> values);

// Transformed distances of every training point at layer l, in point order.
std::vector<double> layer_distances(const Network& net, const ForwardTrace& trace,
                                    const Eigen::VectorXd& labels, int layer, double lambda);

// Inference-mode signature over the training set. Throws DivergedError for a
// network with non-finite parameters.
SignatureMatrix extract_signature(const Network& net, const Dataset& train_data, double lambda);

}  // namespace gapkit
