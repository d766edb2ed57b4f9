#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gapkit/ggp.hpp"

namespace gapkit {

enum class Regime { kSameDist, kUnseenHparams, kUnseenDatasets };
enum class Scope { kPerDataset, kSingleModel };
enum class LabelMode { kGap, kTestAccuracy };

std::string to_string(Regime regime);
std::string to_string(Scope scope);
std::string to_string(LabelMode mode);
// Accept both "same_dist" and "same-dist" spellings.
Regime regime_from_string(const std::string& name);
Scope scope_from_string(const std::string& name);
LabelMode label_mode_from_string(const std::string& name);

inline constexpr int kNumFolds = 5;

// R^2 = 1 - sum (p - g)^2 / sum (g - mean g)^2. Throws UndefinedMetricError
// when every label is identical.
double r_squared(std::span<const double> predictions, std::span<const double> labels);

// Mean absolute difference.
double l1_loss(std::span<const double> predictions, std::span<const double> labels);

struct FoldPlan {
  Regime regime = Regime::kSameDist;
  Scope scope = Scope::kPerDataset;
  std::vector<std::vector<std::int64_t>> folds;  // net ids, sorted
  std::map<std::int64_t, int> fold_of;           // net id -> fold index

  int num_folds() const { return static_cast<int>(folds.size()); }
};

// Contiguous blocks of near-equal size, smaller blocks first (27 -> 5,5,5,6,6).
std::vector<std::size_t> block_sizes(std::size_t count, int blocks);

// same_dist: one fold per distinct data seed. unseen_hparams: sorted hparam
// ids in 5 contiguous blocks. unseen_datasets: sorted variation ids in 5
// contiguous blocks (single-model scope only).
FoldPlan make_folds(const std::vector<GgpExample>& examples, Regime regime, Scope scope);

// Number of grouping keys (data seed, hparam id or variation id, per regime)
// that occur in a fold's test set and in its training set. Zero for a valid
// plan. For per-dataset scope the check runs within every variation.
std::size_t count_fold_leaks(const std::vector<GgpExample>& examples, const FoldPlan& plan);

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;  // summed over per-dataset models
  std::size_t n_test = 0;
  double r2 = 0.0;          // NaN when undefined
  double l1 = 0.0;
  int models = 0;
  int skipped_models = 0;
};

struct EvalReport {
  Scope scope = Scope::kPerDataset;
  Regime regime = Regime::kSameDist;
  GgpFamily family = GgpFamily::kLinear;
  LabelMode label_mode = LabelMode::kGap;
  double lambda = 0.0;
  double r2 = 0.0;  // pooled over every test fold
  double l1 = 0.0;
  std::size_t n = 0;
  std::size_t excluded_diverged = 0;
  std::vector<FoldMetrics> per_fold;
  std::vector<std::string> warnings;
  // Pooled test-fold predictions in net-id order, for calibration plots.
  std::vector<std::int64_t> net_ids;
  std::vector<double> predictions;
  std::vector<double> labels;
};

// Cross-validated evaluation of one (scope, regime, family) cell. Per-dataset
// scope trains one predictor per (variation, fold); single-model scope one per
// fold. Metrics are computed on the concatenation of all test-fold
// predictions. Folds whose training split is too small are skipped and listed
// in the warnings.
EvalReport evaluate_regime(const std::vector<GgpExample>& examples, Regime regime, Scope scope,
                           GgpFamily family, LabelMode label_mode,
                           const GgpTrainerConfig& config = {});

TaskMode task_mode_for(Scope scope);

}  // namespace gapkit
