#include "gapkit/ggp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "gapkit/error.hpp"

namespace gapkit {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kFeatureDim = 5;
constexpr double kLambdaTolerance = 1e-12;

bool same_lambda(double a, double b) { return std::abs(a - b) <= kLambdaTolerance; }

void glorot_fill(double* data, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int i = 0; i < fan_in * fan_out; ++i) data[i] = uniform(rng, -bound, bound);
}

double common_lambda(const std::vector<GgpExample>& examples) {
  if (examples.empty()) throw DomainError("GGP fit: no training examples");
  const double lambda = examples.front().signature.lambda;
  for (const auto& ex : examples)
    if (!same_lambda(ex.signature.lambda, lambda))
      throw ConfigError("GGP fit: examples mix signatures extracted with different lambda");
  return lambda;
}

void check_mode_lambda(double lambda, TaskMode mode, const GgpTrainerConfig& config) {
  if (!same_lambda(lambda, config.expected_lambda(mode)))
    throw ConfigError("GGP fit: " + to_string(mode) + " mode requires lambda " +
                      std::to_string(config.expected_lambda(mode)) + ", signatures carry " +
                      std::to_string(lambda));
}

RowVectorXd summed_row(const SignatureMatrix& sig) {
  const SignatureRow s = aggregate_sum(sig);
  RowVectorXd r(kFeatureDim);
  for (int k = 0; k < kFeatureDim; ++k) r(k) = s[static_cast<std::size_t>(k)];
  return r;
}

// Shuffled epochs chopped into batches of min(batch_size, n); the last batch
// of an epoch may be short.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, int batch_size, std::uint64_t seed)
      : order_(n), batch_(std::min<std::size_t>(static_cast<std::size_t>(batch_size), n)),
        rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle();
  }

  std::vector<std::size_t> next() {
    if (cursor_ >= order_.size()) {
      shuffle();
      cursor_ = 0;
    }
    const std::size_t end = std::min(cursor_ + batch_, order_.size());
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i)
      std::swap(order_[i - 1], order_[uniform_index(rng_, i)]);
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

template <class LossFn>
FitReport run_optimizer(std::vector<double>& params, std::size_t n, int steps,
                        const GgpTrainerConfig& config, std::uint64_t seed, LossFn&& loss_fn) {
  OptState opt(config.optimizer, params.size());
  EpochSampler sampler(n, config.batch_size, seed);
  std::vector<double> grad(params.size());
  FitReport report;
  report.seed = seed;
  for (int step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    report.final_loss = loss_fn(sampler.next(), grad);
    opt.step(params, grad);
  }
  report.steps = steps;
  return report;
}

MatrixXd orthogonal(int n, Rng& rng) {
  MatrixXd a(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) a(r, c) = standard_normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  const MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < n; ++c)
    if (rmat(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

}  // namespace

std::string to_string(GgpFamily family) {
  switch (family) {
    case GgpFamily::kLinear: return "linear";
    case GgpFamily::kDnn: return "dnn";
    case GgpFamily::kRnn: return "rnn";
  }
  return "unknown";
}

GgpFamily family_from_string(const std::string& name) {
  if (name == "linear") return GgpFamily::kLinear;
  if (name == "dnn") return GgpFamily::kDnn;
  if (name == "rnn") return GgpFamily::kRnn;
  throw DomainError("unknown GGP family '" + name + "'");
}

std::string to_string(TaskMode mode) {
  return mode == TaskMode::kDatasetDependent ? "dataset_dependent" : "dataset_independent";
}

SignatureRow aggregate_sum(const SignatureMatrix& signature) {
  if (signature.rows.empty()) throw DomainError("aggregate_sum: empty signature");
  SignatureRow total{};
  for (const auto& row : signature.rows)
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += row[k];
  return total;
}

// ---------------------------------------------------------------------------
// DenseStack

DenseStack DenseStack::init(std::vector<int> dims, Rng& rng) {
  DenseStack s;
  s.dims = std::move(dims);
  s.params.assign(s.num_params(), 0.0);
  std::size_t off = 0;
  for (int j = 0; j < s.num_layers(); ++j) {
    const int in = s.dims[static_cast<std::size_t>(j)];
    const int out = s.dims[static_cast<std::size_t>(j + 1)];
    glorot_fill(s.params.data() + off, in, out, rng);
    off += static_cast<std::size_t>(in * out + out);
  }
  return s;
}

std::size_t DenseStack::num_params() const {
  std::size_t n = 0;
  for (int j = 0; j < num_layers(); ++j)
    n += static_cast<std::size_t>(dims[static_cast<std::size_t>(j)] * dims[static_cast<std::size_t>(j + 1)] +
                                  dims[static_cast<std::size_t>(j + 1)]);
  return n;
}

namespace {

std::size_t dense_offset(const std::vector<int>& dims, int layer) {
  std::size_t off = 0;
  for (int j = 0; j < layer; ++j)
    off += static_cast<std::size_t>(dims[static_cast<std::size_t>(j)] * dims[static_cast<std::size_t>(j + 1)] +
                                    dims[static_cast<std::size_t>(j + 1)]);
  return off;
}

}  // namespace

Eigen::Map<const MatrixXd> DenseStack::kernel(int layer) const {
  const std::size_t off = dense_offset(dims, layer);
  return Eigen::Map<const MatrixXd>(params.data() + off, dims[static_cast<std::size_t>(layer)],
                                    dims[static_cast<std::size_t>(layer + 1)]);
}

Eigen::Map<const VectorXd> DenseStack::bias(int layer) const {
  const std::size_t off = dense_offset(dims, layer) +
                          static_cast<std::size_t>(dims[static_cast<std::size_t>(layer)] *
                                                   dims[static_cast<std::size_t>(layer + 1)]);
  return Eigen::Map<const VectorXd>(params.data() + off, dims[static_cast<std::size_t>(layer + 1)]);
}

VectorXd DenseStack::forward(const MatrixXd& inputs, std::vector<MatrixXd>* acts) const {
  MatrixXd a = inputs;
  if (acts != nullptr) {
    acts->clear();
    acts->push_back(a);
  }
  const int last = num_layers() - 1;
  for (int j = 0; j <= last; ++j) {
    MatrixXd z = a * kernel(j);
    z.rowwise() += bias(j).transpose();
    a = j < last ? MatrixXd(z.cwiseMax(0.0)) : z;
    if (acts != nullptr && j < last) acts->push_back(a);
  }
  return a.col(0);
}

MatrixXd DenseStack::backward(const std::vector<MatrixXd>& acts, const VectorXd& dout,
                              std::span<double> grad) const {
  MatrixXd g = dout;
  for (int j = num_layers() - 1; j >= 0; --j) {
    const MatrixXd& a_prev = acts[static_cast<std::size_t>(j)];
    const std::size_t off = dense_offset(dims, j);
    const int in = dims[static_cast<std::size_t>(j)];
    const int out = dims[static_cast<std::size_t>(j + 1)];
    Eigen::Map<MatrixXd>(grad.data() + off, in, out) += a_prev.transpose() * g;
    Eigen::Map<VectorXd>(grad.data() + off + static_cast<std::size_t>(in * out), out) +=
        g.colwise().sum().transpose();
    g = g * kernel(j).transpose();
    if (j > 0) g = g.cwiseProduct((a_prev.array() > 0.0).cast<double>().matrix());
  }
  return g;
}

// ---------------------------------------------------------------------------
// RnnGgp

RnnGgp RnnGgp::init(int hidden, int dense_layers, Rng& rng) {
  RnnGgp m;
  m.hidden = hidden;
  const auto h = static_cast<std::size_t>(hidden);
  m.cell.assign(kFeatureDim * h + h * h + h, 0.0);
  glorot_fill(m.cell.data(), kFeatureDim, hidden, rng);
  const MatrixXd q = orthogonal(hidden, rng);
  Eigen::Map<MatrixXd>(m.cell.data() + kFeatureDim * h, hidden, hidden) = q;
  std::vector<int> dims{hidden};
  for (int i = 0; i < dense_layers; ++i) dims.push_back(hidden);
  dims.push_back(1);
  m.head = DenseStack::init(std::move(dims), rng);
  return m;
}

namespace {

struct CellView {
  Eigen::Map<const MatrixXd> wx;
  Eigen::Map<const MatrixXd> wh;
  Eigen::Map<const RowVectorXd> b;
};

CellView cell_view(const std::vector<double>& cell, int hidden) {
  const auto h = static_cast<std::size_t>(hidden);
  return {Eigen::Map<const MatrixXd>(cell.data(), kFeatureDim, hidden),
          Eigen::Map<const MatrixXd>(cell.data() + kFeatureDim * h, hidden, hidden),
          Eigen::Map<const RowVectorXd>(cell.data() + kFeatureDim * h + h * h, hidden)};
}

RowVectorXd signature_row(const SignatureMatrix& sig, std::size_t t) {
  RowVectorXd r(kFeatureDim);
  for (int k = 0; k < kFeatureDim; ++k) r(k) = sig.rows[t][static_cast<std::size_t>(k)];
  return r;
}

}  // namespace

RowVectorXd RnnGgp::final_state(const SignatureMatrix& signature) const {
  if (signature.rows.empty()) throw DomainError("RnnGgp: empty signature");
  const CellView v = cell_view(cell, hidden);
  RowVectorXd h = RowVectorXd::Zero(hidden);
  for (std::size_t t = 0; t < signature.rows.size(); ++t)
    h = (signature_row(signature, t) * v.wx + h * v.wh + v.b).array().tanh().matrix();
  return h;
}

double RnnGgp::predict(const SignatureMatrix& signature) const {
  return head.forward(final_state(signature))(0);
}

double RnnGgp::loss_and_gradient(const std::vector<const GgpExample*>& batch,
                                 std::vector<double>& grad) const {
  if (batch.empty()) throw DomainError("RnnGgp: empty batch");
  grad.assign(num_params(), 0.0);
  const auto hh = static_cast<std::size_t>(hidden);
  const CellView v = cell_view(cell, hidden);
  const double n = static_cast<double>(batch.size());

  std::map<std::size_t, std::vector<const GgpExample*>> by_length;
  for (const auto* ex : batch) {
    if (ex->signature.rows.empty()) throw DomainError("RnnGgp: empty signature");
    by_length[ex->signature.rows.size()].push_back(ex);
  }

  Eigen::Map<MatrixXd> gwx(grad.data(), kFeatureDim, hidden);
  Eigen::Map<MatrixXd> gwh(grad.data() + kFeatureDim * hh, hidden, hidden);
  Eigen::Map<RowVectorXd> gb(grad.data() + kFeatureDim * hh + hh * hh, hidden);
  std::span<double> head_grad(grad.data() + cell.size(), head.num_params());

  double loss = 0.0;
  for (const auto& [length, group] : by_length) {
    const auto g = static_cast<Eigen::Index>(group.size());
    std::vector<MatrixXd> xs(length, MatrixXd(g, kFeatureDim));
    for (Eigen::Index i = 0; i < g; ++i)
      for (std::size_t t = 0; t < length; ++t) xs[t].row(i) = signature_row(group[static_cast<std::size_t>(i)]->signature, t);

    std::vector<MatrixXd> hs(length + 1);
    hs[0] = MatrixXd::Zero(g, hidden);
    for (std::size_t t = 0; t < length; ++t) {
      MatrixXd pre = xs[t] * v.wx + hs[t] * v.wh;
      pre.rowwise() += v.b;
      hs[t + 1] = pre.array().tanh().matrix();
    }

    std::vector<MatrixXd> acts;
    const VectorXd pred = head.forward(hs[length], &acts);
    VectorXd dout(g);
    for (Eigen::Index i = 0; i < g; ++i) {
      const double r = pred(i) - group[static_cast<std::size_t>(i)]->label;
      loss += r * r;
      dout(i) = 2.0 * r / n;
    }
    MatrixXd dh = head.backward(acts, dout, head_grad);
    for (std::size_t t = length; t >= 1; --t) {
      const MatrixXd da = dh.cwiseProduct((1.0 - hs[t].array().square()).matrix());
      gwx += xs[t - 1].transpose() * da;
      gwh += hs[t - 1].transpose() * da;
      gb += da.colwise().sum();
      dh = da * v.wh.transpose();
    }
  }
  return loss / n;
}

void RnnGgp::set_params(std::span<const double> flat) {
  if (flat.size() != num_params()) throw DomainError("RnnGgp::set_params: size mismatch");
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(cell.size()), cell.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(cell.size()), flat.end(), head.params.begin());
}

std::vector<double> RnnGgp::flat_params() const {
  std::vector<double> out(cell);
  out.insert(out.end(), head.params.begin(), head.params.end());
  return out;
}

// ---------------------------------------------------------------------------
// GgpModel

GgpModel::GgpModel(Body body, double lambda, FitReport report)
    : body_(std::move(body)), lambda_(lambda), report_(report) {}

GgpFamily GgpModel::family() const {
  switch (body_.index()) {
    case 0: return GgpFamily::kLinear;
    case 1: return GgpFamily::kDnn;
    default: return GgpFamily::kRnn;
  }
}

double GgpModel::predict(const SignatureMatrix& signature) const {
  if (!same_lambda(signature.lambda, lambda_))
    throw ConfigError("GgpModel::predict: model expects lambda " + std::to_string(lambda_) +
                      ", signature carries " + std::to_string(signature.lambda));
  if (const auto* lin = std::get_if<LinearGgp>(&body_)) {
    const SignatureRow s = aggregate_sum(signature);
    double out = lin->intercept;
    for (std::size_t k = 0; k < s.size(); ++k) out += lin->coefficients[k] * s[k];
    return out;
  }
  if (const auto* dnn = std::get_if<DnnGgp>(&body_)) return dnn->net.forward(summed_row(signature))(0);
  return std::get<RnnGgp>(body_).predict(signature);
}

std::string GgpModel::to_json() const {
  Json j;
  j["format"] = "gapkit-ggp";
  j["version"] = 1;
  j["family"] = to_string(family());
  j["lambda"] = lambda_;
  j["fit"] = {{"steps", report_.steps}, {"final_loss", report_.final_loss}, {"seed", report_.seed}};
  if (const auto* lin = std::get_if<LinearGgp>(&body_)) {
    j["coefficients"] = lin->coefficients;
    j["intercept"] = lin->intercept;
    j["rank_deficient"] = lin->rank_deficient;
  } else if (const auto* dnn = std::get_if<DnnGgp>(&body_)) {
    j["dims"] = dnn->net.dims;
    j["params"] = dnn->net.params;
  } else {
    const auto& rnn = std::get<RnnGgp>(body_);
    j["input_dim"] = kFeatureDim;
    j["hidden"] = rnn.hidden;
    j["cell_params"] = rnn.cell;
    j["head_dims"] = rnn.head.dims;
    j["head_params"] = rnn.head.params;
  }
  return j.dump();
}

GgpModel GgpModel::from_json(const std::string& text) {
  const Json j = Json::parse(text);
  if (j.value("format", "") != "gapkit-ggp") throw DomainError("not a gapkit GGP model file");
  const GgpFamily family = family_from_string(j.at("family").get<std::string>());
  const double lambda = j.at("lambda").get<double>();
  FitReport report;
  if (j.contains("fit")) {
    report.steps = j["fit"].value("steps", 0);
    report.final_loss = j["fit"].value("final_loss", 0.0);
    report.seed = j["fit"].value("seed", std::uint64_t{0});
  }
  switch (family) {
    case GgpFamily::kLinear: {
      LinearGgp lin;
      lin.coefficients = j.at("coefficients").get<std::array<double, 5>>();
      lin.intercept = j.at("intercept").get<double>();
      lin.rank_deficient = j.value("rank_deficient", false);
      return GgpModel(lin, lambda, report);
    }
    case GgpFamily::kDnn: {
      DnnGgp dnn;
      dnn.net.dims = j.at("dims").get<std::vector<int>>();
      dnn.net.params = j.at("params").get<std::vector<double>>();
      if (dnn.net.params.size() != dnn.net.num_params())
        throw DomainError("GGP model: parameter count does not match dims");
      return GgpModel(dnn, lambda, report);
    }
    case GgpFamily::kRnn: {
      RnnGgp rnn;
      rnn.hidden = j.at("hidden").get<int>();
      rnn.cell = j.at("cell_params").get<std::vector<double>>();
      rnn.head.dims = j.at("head_dims").get<std::vector<int>>();
      rnn.head.params = j.at("head_params").get<std::vector<double>>();
      const auto h = static_cast<std::size_t>(rnn.hidden);
      if (rnn.cell.size() != kFeatureDim * h + h * h + h ||
          rnn.head.params.size() != rnn.head.num_params())
        throw DomainError("GGP model: parameter count does not match shapes");
      return GgpModel(rnn, lambda, report);
    }
  }
  throw DomainError("GGP model: unsupported family");
}

// ---------------------------------------------------------------------------
// Fitting

std::size_t min_training_examples(GgpFamily family) {
  return family == GgpFamily::kLinear ? 6 : 1;
}

GgpModel fit_linear(const std::vector<GgpExample>& examples) {
  if (examples.size() < min_training_examples(GgpFamily::kLinear))
    throw DomainError("fit_linear: at least 6 examples required, got " +
                      std::to_string(examples.size()));
  const double lambda = common_lambda(examples);
  const auto n = static_cast<Eigen::Index>(examples.size());
  MatrixXd design(n, kFeatureDim + 1);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design.block(i, 1, 1, kFeatureDim) = summed_row(examples[static_cast<std::size_t>(i)].signature);
    y(i) = examples[static_cast<std::size_t>(i)].label;
  }
  const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(design);
  const VectorXd beta = cod.solve(y);
  LinearGgp lin;
  lin.intercept = beta(0);
  for (int k = 0; k < kFeatureDim; ++k) lin.coefficients[static_cast<std::size_t>(k)] = beta(k + 1);
  lin.rank_deficient = cod.rank() < kFeatureDim + 1;
  FitReport report;
  report.final_loss = (design * beta - y).squaredNorm() / static_cast<double>(n);
  return GgpModel(lin, lambda, report);
}

GgpModel fit_dnn(const std::vector<GgpExample>& examples, TaskMode mode,
                 const GgpTrainerConfig& config) {
  const double lambda = common_lambda(examples);
  check_mode_lambda(lambda, mode, config);
  const auto n = static_cast<Eigen::Index>(examples.size());
  MatrixXd features(n, kFeatureDim);
  VectorXd labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    features.row(i) = summed_row(examples[static_cast<std::size_t>(i)].signature);
    labels(i) = examples[static_cast<std::size_t>(i)].label;
  }

  Rng init_rng(config.seed);
  std::vector<int> dims{kFeatureDim};
  for (int i = 0; i < config.dense_layers; ++i) dims.push_back(config.hidden_units);
  dims.push_back(1);
  DnnGgp dnn{DenseStack::init(std::move(dims), init_rng)};

  std::vector<MatrixXd> acts;
  const FitReport report = run_optimizer(
      dnn.net.params, examples.size(), config.dnn_steps(mode), config, mix64(config.seed),
      [&](const std::vector<std::size_t>& idx, std::vector<double>& grad) {
        const auto b = static_cast<Eigen::Index>(idx.size());
        MatrixXd x(b, kFeatureDim);
        VectorXd y(b);
        for (Eigen::Index i = 0; i < b; ++i) {
          x.row(i) = features.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
          y(i) = labels(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
        }
        const VectorXd r = dnn.net.forward(x, &acts) - y;
        dnn.net.backward(acts, 2.0 * r / static_cast<double>(b), grad);
        return r.squaredNorm() / static_cast<double>(b);
      });
  return GgpModel(std::move(dnn), lambda, report);
}

GgpModel fit_rnn(const std::vector<GgpExample>& examples, TaskMode mode,
                 const GgpTrainerConfig& config) {
  const double lambda = common_lambda(examples);
  check_mode_lambda(lambda, mode, config);
  Rng init_rng(config.seed);
  RnnGgp rnn = RnnGgp::init(config.hidden_units, config.dense_layers, init_rng);
  std::vector<double> params = rnn.flat_params();
  const FitReport report = run_optimizer(
      params, examples.size(), config.rnn_steps(mode), config, mix64(config.seed),
      [&](const std::vector<std::size_t>& idx, std::vector<double>& grad) {
        rnn.set_params(params);
        std::vector<const GgpExample*> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(&examples[i]);
        return rnn.loss_and_gradient(batch, grad);
      });
  rnn.set_params(params);
  return GgpModel(std::move(rnn), lambda, report);
}

GgpModel fit(GgpFamily family, const std::vector<GgpExample>& examples, TaskMode mode,
             const GgpTrainerConfig& config) {
  switch (family) {
    case GgpFamily::kLinear: return fit_linear(examples);
    case GgpFamily::kDnn: return fit_dnn(examples, mode, config);
    case GgpFamily::kRnn: return fit_rnn(examples, mode, config);
  }
  throw DomainError("fit: unknown family");
}

}  // namespace gapkit
