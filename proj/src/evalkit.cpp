#include "gapkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gapkit/error.hpp"
#include "gapkit/rng.hpp"

namespace gapkit {

namespace {

std::string normalize(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

std::int64_t fold_key(const GgpExample& ex, Regime regime) {
  switch (regime) {
    case Regime::kSameDist: return ex.data_seed;
    case Regime::kUnseenHparams: return ex.hparam_id;
    case Regime::kUnseenDatasets: return ex.variation_id;
  }
  return 0;
}

double safe_r2(std::span<const double> p, std::span<const double> g) {
  try {
    return r_squared(p, g);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::kSameDist: return "same_dist";
    case Regime::kUnseenHparams: return "unseen_hparams";
    case Regime::kUnseenDatasets: return "unseen_datasets";
  }
  return "unknown";
}

std::string to_string(Scope scope) {
  return scope == Scope::kPerDataset ? "per_dataset" : "single_model";
}

std::string to_string(LabelMode mode) { return mode == LabelMode::kGap ? "gap" : "test_acc"; }

Regime regime_from_string(const std::string& name) {
  const std::string n = normalize(name);
  if (n == "same_dist") return Regime::kSameDist;
  if (n == "unseen_hparams") return Regime::kUnseenHparams;
  if (n == "unseen_datasets") return Regime::kUnseenDatasets;
  throw DomainError("unknown regime '" + name + "'");
}

Scope scope_from_string(const std::string& name) {
  const std::string n = normalize(name);
  if (n == "per_dataset") return Scope::kPerDataset;
  if (n == "single_model") return Scope::kSingleModel;
  throw DomainError("unknown scope '" + name + "'");
}

LabelMode label_mode_from_string(const std::string& name) {
  const std::string n = normalize(name);
  if (n == "gap") return LabelMode::kGap;
  if (n == "test_acc" || n == "test_accuracy") return LabelMode::kTestAccuracy;
  throw DomainError("unknown label mode '" + name + "'");
}

TaskMode task_mode_for(Scope scope) {
  return scope == Scope::kPerDataset ? TaskMode::kDatasetDependent : TaskMode::kDatasetIndependent;
}

double r_squared(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size())
    throw DomainError("r_squared: predictions and labels differ in length");
  if (labels.size() < 2) throw DomainError("r_squared: at least two values required");
  double mean = 0.0;
  for (double g : labels) mean += g;
  mean /= static_cast<double>(labels.size());
  double residual = 0.0;
  double variance = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    residual += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
    variance += (labels[i] - mean) * (labels[i] - mean);
  }
  const bool constant =
      std::all_of(labels.begin(), labels.end(), [&](double g) { return g == labels.front(); });
  if (constant || variance == 0.0)
    throw UndefinedMetricError("r_squared: labels have zero variance");
  return 1.0 - residual / variance;
}

double l1_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size())
    throw DomainError("l1_loss: predictions and labels differ in length");
  if (labels.empty()) throw DomainError("l1_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += std::abs(predictions[i] - labels[i]);
  return total / static_cast<double>(labels.size());
}

std::vector<std::size_t> block_sizes(std::size_t count, int blocks) {
  const auto b = static_cast<std::size_t>(std::max(1, blocks));
  const std::size_t base = count / b;
  const std::size_t extra = count % b;
  std::vector<std::size_t> sizes(b, base);
  for (std::size_t i = b - extra; i < b; ++i) ++sizes[i];
  return sizes;
}

FoldPlan make_folds(const std::vector<GgpExample>& examples, Regime regime, Scope scope) {
  if (regime == Regime::kUnseenDatasets && scope == Scope::kPerDataset)
    throw ConfigError("make_folds: unseen_datasets requires single_model scope");
  if (examples.empty()) throw DomainError("make_folds: no examples");

  std::set<std::int64_t> keys;
  for (const auto& ex : examples) keys.insert(fold_key(ex, regime));

  std::map<std::int64_t, int> fold_of_key;
  if (regime == Regime::kSameDist) {
    int f = 0;
    for (std::int64_t k : keys) fold_of_key[k] = f++;
  } else {
    const int blocks = std::min<int>(kNumFolds, static_cast<int>(keys.size()));
    const auto sizes = block_sizes(keys.size(), blocks);
    auto it = keys.begin();
    for (int f = 0; f < blocks; ++f)
      for (std::size_t i = 0; i < sizes[static_cast<std::size_t>(f)]; ++i) fold_of_key[*it++] = f;
  }

  FoldPlan plan;
  plan.regime = regime;
  plan.scope = scope;
  int folds = 0;
  for (const auto& [k, f] : fold_of_key) folds = std::max(folds, f + 1);
  plan.folds.resize(static_cast<std::size_t>(folds));
  for (const auto& ex : examples) {
    if (plan.fold_of.count(ex.net_id) != 0) throw DomainError("make_folds: duplicate net id");
    const int f = fold_of_key.at(fold_key(ex, regime));
    plan.fold_of[ex.net_id] = f;
    plan.folds[static_cast<std::size_t>(f)].push_back(ex.net_id);
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

std::size_t count_fold_leaks(const std::vector<GgpExample>& examples, const FoldPlan& plan) {
  std::size_t leaks = 0;
  std::set<int> groups;
  for (const auto& ex : examples)
    groups.insert(plan.scope == Scope::kPerDataset ? ex.variation_id : 0);
  for (int group : groups) {
    for (int f = 0; f < plan.num_folds(); ++f) {
      std::set<std::int64_t> train_keys;
      std::set<std::int64_t> test_keys;
      for (const auto& ex : examples) {
        if (plan.scope == Scope::kPerDataset && ex.variation_id != group) continue;
        const auto it = plan.fold_of.find(ex.net_id);
        if (it == plan.fold_of.end()) {
          ++leaks;  // uncovered example
          continue;
        }
        (it->second == f ? test_keys : train_keys).insert(fold_key(ex, plan.regime));
      }
      for (std::int64_t k : test_keys) leaks += train_keys.count(k);
    }
  }
  return leaks;
}

EvalReport evaluate_regime(const std::vector<GgpExample>& examples, Regime regime, Scope scope,
                           GgpFamily family, LabelMode label_mode, const GgpTrainerConfig& config) {
  const FoldPlan plan = make_folds(examples, regime, scope);
  const TaskMode mode = task_mode_for(scope);

  EvalReport report;
  report.scope = scope;
  report.regime = regime;
  report.family = family;
  report.label_mode = label_mode;
  report.lambda = examples.front().signature.lambda;

  std::map<int, std::vector<const GgpExample*>> groups;
  for (const auto& ex : examples)
    groups[scope == Scope::kPerDataset ? ex.variation_id : -1].push_back(&ex);

  std::vector<std::vector<std::int64_t>> fold_ids(static_cast<std::size_t>(plan.num_folds()));
  std::vector<std::vector<double>> fold_pred(fold_ids.size());
  std::vector<std::vector<double>> fold_label(fold_ids.size());
  report.per_fold.resize(fold_ids.size());
  for (int f = 0; f < plan.num_folds(); ++f) report.per_fold[static_cast<std::size_t>(f)].fold = f;

  for (const auto& [group, members] : groups) {
    for (int f = 0; f < plan.num_folds(); ++f) {
      auto& fm = report.per_fold[static_cast<std::size_t>(f)];
      std::vector<GgpExample> train;
      std::vector<const GgpExample*> test;
      for (const auto* ex : members) {
        if (plan.fold_of.at(ex->net_id) == f)
          test.push_back(ex);
        else
          train.push_back(*ex);
      }
      if (test.empty()) continue;
      const std::string where = (scope == Scope::kPerDataset ? "variation " + std::to_string(group) + ", " : "") +
                                "fold " + std::to_string(f);
      if (train.size() < min_training_examples(family)) {
        ++fm.skipped_models;
        report.warnings.push_back(where + ": skipped, " + std::to_string(train.size()) +
                                  " training examples");
        continue;
      }
      GgpTrainerConfig fold_config = config;
      const auto unit = static_cast<std::uint64_t>((group + 1) * 64 + f);
      fold_config.seed = derive_seed(config.seed, unit, purpose::kGgpFit);
      const GgpModel model = fit(family, train, mode, fold_config);
      if (const auto* lin = std::get_if<LinearGgp>(&model.body()); lin && lin->rank_deficient)
        report.warnings.push_back(where + ": rank-deficient design, least-norm solution used");
      ++fm.models;
      fm.n_train += train.size();
      fm.n_test += test.size();
      auto& ids = fold_ids[static_cast<std::size_t>(f)];
      for (const auto* ex : test) {
        ids.push_back(ex->net_id);
        fold_pred[static_cast<std::size_t>(f)].push_back(model.predict(ex->signature));
        fold_label[static_cast<std::size_t>(f)].push_back(ex->label);
      }
    }
  }

  std::vector<std::pair<std::int64_t, std::pair<double, double>>> pooled;
  for (std::size_t f = 0; f < fold_ids.size(); ++f) {
    auto& fm = report.per_fold[f];
    if (!fold_pred[f].empty()) {
      fm.r2 = safe_r2(fold_pred[f], fold_label[f]);
      fm.l1 = l1_loss(fold_pred[f], fold_label[f]);
      if (std::isnan(fm.r2))
        report.warnings.push_back("fold " + std::to_string(f) + ": R^2 undefined (constant labels)");
    } else {
      fm.r2 = std::numeric_limits<double>::quiet_NaN();
      fm.l1 = std::numeric_limits<double>::quiet_NaN();
    }
    for (std::size_t i = 0; i < fold_ids[f].size(); ++i)
      pooled.push_back({fold_ids[f][i], {fold_pred[f][i], fold_label[f][i]}});
  }
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, pl] : pooled) {
    report.net_ids.push_back(id);
    report.predictions.push_back(pl.first);
    report.labels.push_back(pl.second);
  }
  report.n = pooled.size();
  if (report.n >= 2) {
    report.r2 = safe_r2(report.predictions, report.labels);
    report.l1 = l1_loss(report.predictions, report.labels);
  } else {
    report.r2 = std::numeric_limits<double>::quiet_NaN();
    report.l1 = report.n == 1 ? l1_loss(report.predictions, report.labels)
                              : std::numeric_limits<double>::quiet_NaN();
    report.warnings.push_back("fewer than two pooled predictions");
  }
  return report;
}

}  // namespace gapkit
