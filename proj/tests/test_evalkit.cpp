#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gapkit/error.hpp"
#include "gapkit/evalkit.hpp"

namespace gapkit {
namespace {

using V = std::vector<double>;

TEST(RSquared, Examples) {
  EXPECT_DOUBLE_EQ(r_squared(V{1, 2, 3}, V{1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(r_squared(V{2, 2, 2}, V{1, 2, 3}), 0.0);
  // SSres = 0 + 4 + 1 = 5, SStot = 2
  EXPECT_DOUBLE_EQ(r_squared(V{1, 4, 2}, V{1, 2, 3}), -1.5);
  EXPECT_DOUBLE_EQ(r_squared(V{3, 2, 1}, V{1, 2, 3}), -3.0);
  // 1 - (0 + 1 + 4) / (1 + 0 + 1)
  EXPECT_DOUBLE_EQ(r_squared(V{0, 0, 0}, V{0, 1, 2}), -1.5);
}

TEST(RSquared, UndefinedAndInvalid) {
  EXPECT_THROW(r_squared(V{1, 2}, V{5, 5}), UndefinedMetricError);
  EXPECT_THROW(r_squared(V{1, 2}, V{1, 2, 3}), DomainError);
  EXPECT_THROW(r_squared(V{1}, V{1}), DomainError);
}

TEST(RSquared, JointPermutationAndAffineInvariance) {
  Rng rng(1);
  V p(30), g(30);
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = uniform(rng, -1, 1);
    p[i] = g[i] + uniform(rng, -0.3, 0.3);
  }
  const double r = r_squared(p, g);
  V pp = p, gg = g;
  std::reverse(pp.begin(), pp.end());
  std::reverse(gg.begin(), gg.end());
  EXPECT_NEAR(r_squared(pp, gg), r, 1e-12);
  for (std::size_t i = 0; i < p.size(); ++i) {
    pp[i] = -3.0 * p[i] + 7.0;
    gg[i] = -3.0 * g[i] + 7.0;
  }
  EXPECT_NEAR(r_squared(pp, gg), r, 1e-12);
  EXPECT_LE(r, 1.0);
}

TEST(L1, Examples) {
  EXPECT_DOUBLE_EQ(l1_loss(V{0.1, 0.3}, V{0.0, 0.1}), 0.15);
  EXPECT_DOUBLE_EQ(l1_loss(V{0.1, 0.2}, V{0.0, 0.4}), 0.15);
  EXPECT_DOUBLE_EQ(l1_loss(V{0, 0}, V{1, -1}), 1.0);
  EXPECT_DOUBLE_EQ(l1_loss(V{1, 2, 3}, V{1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(l1_loss(V{-1}, V{1}), 2.0);
  EXPECT_THROW(l1_loss(V{}, V{}), DomainError);
  EXPECT_THROW(l1_loss(V{1}, V{1, 2}), DomainError);
}

TEST(L1, SymmetricAndTriangle) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    V a(8), b(8), c(8);
    for (std::size_t i = 0; i < 8; ++i) {
      a[i] = uniform(rng, -1, 1);
      b[i] = uniform(rng, -1, 1);
      c[i] = uniform(rng, -1, 1);
    }
    EXPECT_DOUBLE_EQ(l1_loss(a, b), l1_loss(b, a));
    EXPECT_LE(l1_loss(a, c), l1_loss(a, b) + l1_loss(b, c) + 1e-15);
    EXPECT_GE(l1_loss(a, b), 0.0);
  }
}

TEST(BlockSizes, Examples) {
  EXPECT_EQ(block_sizes(27, 5), (std::vector<std::size_t>{5, 5, 5, 6, 6}));
  EXPECT_EQ(block_sizes(20, 5), (std::vector<std::size_t>{4, 4, 4, 4, 4}));
  EXPECT_EQ(block_sizes(12, 5), (std::vector<std::size_t>{2, 2, 2, 3, 3}));
  EXPECT_EQ(block_sizes(3, 3), (std::vector<std::size_t>{1, 1, 1}));
}

// variations x seeds x hparams grid with a synthetic signature and label.
std::vector<GgpExample> grid(int variations, int seeds, int hparams, double lambda = 0.5) {
  std::vector<GgpExample> out;
  Rng rng(99);
  std::int64_t id = 0;
  for (int v = 0; v < variations; ++v)
    for (int s = 1; s <= seeds; ++s)
      for (int h = 0; h < hparams; ++h) {
        GgpExample ex;
        ex.net_id = id++;
        ex.variation_id = v;
        ex.data_seed = s;
        ex.hparam_id = h;
        ex.signature.lambda = lambda;
        for (int r = 0; r < 3; ++r) {
          SignatureRow row{};
          for (double& x : row) x = uniform(rng, -lambda, lambda);
          std::sort(row.begin(), row.end());
          ex.signature.rows.push_back(row);
        }
        const SignatureRow sum = aggregate_sum(ex.signature);
        ex.label = 0.1 + 0.2 * sum[0] - 0.1 * sum[2] + 0.05 * sum[4] + 0.01 * v;
        out.push_back(ex);
      }
  return out;
}

TEST(Folds, SameDistOneFoldPerSeed) {
  const auto ex = grid(4, 3, 10);
  for (Scope scope : {Scope::kPerDataset, Scope::kSingleModel}) {
    const FoldPlan plan = make_folds(ex, Regime::kSameDist, scope);
    EXPECT_EQ(plan.num_folds(), 3);
    EXPECT_EQ(count_fold_leaks(ex, plan), 0u);
    for (const auto& e : ex) EXPECT_EQ(plan.fold_of.at(e.net_id), static_cast<int>(e.data_seed) - 1);
  }
  EXPECT_EQ(make_folds(grid(2, 5, 4), Regime::kSameDist, Scope::kPerDataset).num_folds(), 5);
}

TEST(Folds, UnseenHparamsContiguousBlocks) {
  const auto ex = grid(3, 2, 20);
  const FoldPlan plan = make_folds(ex, Regime::kUnseenHparams, Scope::kPerDataset);
  ASSERT_EQ(plan.num_folds(), 5);
  EXPECT_EQ(count_fold_leaks(ex, plan), 0u);
  for (const auto& e : ex) EXPECT_EQ(plan.fold_of.at(e.net_id), e.hparam_id / 4);
}

TEST(Folds, UnseenDatasetsTwentySevenVariations) {
  const auto ex = grid(27, 1, 2);
  const FoldPlan plan = make_folds(ex, Regime::kUnseenDatasets, Scope::kSingleModel);
  ASSERT_EQ(plan.num_folds(), 5);
  EXPECT_EQ(count_fold_leaks(ex, plan), 0u);
  std::vector<std::set<int>> vars(5);
  for (const auto& e : ex) vars[static_cast<std::size_t>(plan.fold_of.at(e.net_id))].insert(e.variation_id);
  const std::size_t expect[] = {5, 5, 5, 6, 6};
  int next = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(vars[f].size(), expect[f]);
    EXPECT_EQ(*vars[f].begin(), next);
    next += static_cast<int>(vars[f].size());
  }
}

TEST(Folds, PartitionEveryExampleOnce) {
  const auto ex = grid(4, 3, 7);
  for (Regime r : {Regime::kSameDist, Regime::kUnseenHparams, Regime::kUnseenDatasets}) {
    const FoldPlan plan = make_folds(ex, r, Scope::kSingleModel);
    std::size_t total = 0;
    std::set<std::int64_t> seen;
    for (const auto& fold : plan.folds) {
      EXPECT_FALSE(fold.empty());
      EXPECT_TRUE(std::is_sorted(fold.begin(), fold.end()));
      total += fold.size();
      seen.insert(fold.begin(), fold.end());
    }
    EXPECT_EQ(total, ex.size());
    EXPECT_EQ(seen.size(), ex.size());
  }
}

TEST(Folds, LeakDetected) {
  const auto ex = grid(2, 3, 5);
  FoldPlan plan = make_folds(ex, Regime::kSameDist, Scope::kSingleModel);
  // Move one seed-1 network into the seed-2 fold.
  plan.fold_of[ex.front().net_id] = 1;
  EXPECT_GT(count_fold_leaks(ex, plan), 0u);
}

TEST(Folds, InvalidCombination) {
  const auto ex = grid(2, 2, 5);
  EXPECT_THROW(make_folds(ex, Regime::kUnseenDatasets, Scope::kPerDataset), ConfigError);
  EXPECT_THROW(evaluate_regime(ex, Regime::kUnseenDatasets, Scope::kPerDataset, GgpFamily::kLinear,
                               LabelMode::kGap),
               ConfigError);
  EXPECT_THROW(make_folds({}, Regime::kSameDist, Scope::kPerDataset), DomainError);
}

TEST(Evaluate, LinearRecoversLinearLabels) {
  const auto ex = grid(4, 3, 12);
  const EvalReport r =
      evaluate_regime(ex, Regime::kSameDist, Scope::kPerDataset, GgpFamily::kLinear, LabelMode::kGap);
  EXPECT_EQ(r.n, ex.size());
  EXPECT_NEAR(r.r2, 1.0, 1e-10);
  EXPECT_NEAR(r.l1, 0.0, 1e-10);
  ASSERT_EQ(r.per_fold.size(), 3u);
  for (const auto& f : r.per_fold) {
    EXPECT_EQ(f.models, 4);
    EXPECT_EQ(f.n_test, 48u);
    EXPECT_EQ(f.n_train, 96u);
    EXPECT_NEAR(f.r2, 1.0, 1e-10);
  }
  EXPECT_TRUE(std::is_sorted(r.net_ids.begin(), r.net_ids.end()));
  EXPECT_EQ(r.lambda, 0.5);
}

TEST(Evaluate, PooledMetricsMatchConcatenation) {
  auto ex = grid(3, 3, 10);
  Rng rng(5);
  for (auto& e : ex) e.label += uniform(rng, -0.05, 0.05);
  const EvalReport r = evaluate_regime(ex, Regime::kUnseenHparams, Scope::kSingleModel,
                                       GgpFamily::kLinear, LabelMode::kGap);
  EXPECT_NEAR(r.r2, r_squared(r.predictions, r.labels), 1e-15);
  EXPECT_NEAR(r.l1, l1_loss(r.predictions, r.labels), 1e-15);
  for (std::size_t i = 0; i < r.net_ids.size(); ++i)
    EXPECT_EQ(r.labels[i], ex[static_cast<std::size_t>(r.net_ids[i])].label);
}

TEST(Evaluate, SkipsUndersizedFoldsWithWarning) {
  // Two hparams per variation: unseen_hparams leaves one training network.
  const auto ex = grid(2, 1, 2);
  const EvalReport r = evaluate_regime(ex, Regime::kUnseenHparams, Scope::kPerDataset,
                                       GgpFamily::kLinear, LabelMode::kGap);
  EXPECT_EQ(r.n, 0u);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_TRUE(std::isnan(r.r2));
}

TEST(Evaluate, ConstantLabelsGiveNanR2) {
  auto ex = grid(1, 3, 8);
  for (auto& e : ex) e.label = 0.25;
  const EvalReport r =
      evaluate_regime(ex, Regime::kSameDist, Scope::kSingleModel, GgpFamily::kLinear, LabelMode::kGap);
  EXPECT_TRUE(std::isnan(r.r2));
  EXPECT_NEAR(r.l1, 0.0, 1e-12);
}

TEST(Evaluate, SingleModelDnnNeedsIndependentLambda) {
  const auto ex = grid(2, 3, 6, 0.5);
  GgpTrainerConfig cfg;
  cfg.dnn_steps_independent = 10;
  EXPECT_THROW(evaluate_regime(ex, Regime::kSameDist, Scope::kSingleModel, GgpFamily::kDnn,
                               LabelMode::kGap, cfg),
               ConfigError);
  const auto ind = grid(2, 3, 6, 2.5);
  EXPECT_NO_THROW(evaluate_regime(ind, Regime::kSameDist, Scope::kSingleModel, GgpFamily::kDnn,
                                  LabelMode::kGap, cfg));
}

TEST(Names, RoundTripAndHyphens) {
  for (Regime r : {Regime::kSameDist, Regime::kUnseenHparams, Regime::kUnseenDatasets})
    EXPECT_EQ(regime_from_string(to_string(r)), r);
  EXPECT_EQ(regime_from_string("unseen-hparams"), Regime::kUnseenHparams);
  EXPECT_EQ(scope_from_string("single-model"), Scope::kSingleModel);
  EXPECT_EQ(scope_from_string(to_string(Scope::kPerDataset)), Scope::kPerDataset);
  EXPECT_EQ(label_mode_from_string(to_string(LabelMode::kTestAccuracy)), LabelMode::kTestAccuracy);
  EXPECT_THROW(regime_from_string("kfold"), DomainError);
  EXPECT_EQ(task_mode_for(Scope::kPerDataset), TaskMode::kDatasetDependent);
  EXPECT_EQ(task_mode_for(Scope::kSingleModel), TaskMode::kDatasetIndependent);
}

}  // namespace
}  // namespace gapkit
