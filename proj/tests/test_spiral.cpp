#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "gapkit/error.hpp"
#include "gapkit/spiral.hpp"

namespace gapkit {
namespace {

TEST(ArmPoint, HandComputedValues) {
  const Point2 origin = arm_point(0.0, Arm::kBlue, 1);
  EXPECT_DOUBLE_EQ(origin.x, 0.0);
  EXPECT_DOUBLE_EQ(origin.y, 0.0);

  const Point2 half = arm_point(0.5, Arm::kBlue, 1);
  EXPECT_NEAR(half.x, -0.5, 1e-15);
  EXPECT_NEAR(half.y, 0.0, 1e-15);

  const Point2 red = arm_point(0.5, Arm::kRed, 1);
  EXPECT_NEAR(red.x, 0.5, 1e-15);
  EXPECT_NEAR(red.y, 0.0, 1e-15);
}

TEST(ArmPoint, RedIsBlueRotatedByPi) {
  for (int k = 1; k <= 3; ++k) {
    for (double u = 0.0; u <= 1.0; u += 0.0625) {
      const Point2 b = arm_point(u, Arm::kBlue, k);
      const Point2 r = arm_point(u, Arm::kRed, k);
      EXPECT_EQ(r.x, -b.x);
      EXPECT_EQ(r.y, -b.y);
      EXPECT_LE(b.x * b.x + b.y * b.y, 1.0 + 1e-12);
    }
  }
}

TEST(ArmPoint, CompletesKLoops) {
  // Angle at u = 1 is 2*pi*k, so the arm ends back on the positive x axis at radius 1.
  for (int k = 1; k <= 3; ++k) {
    const Point2 end = arm_point(1.0, Arm::kBlue, k);
    EXPECT_NEAR(end.x, 1.0, 1e-12);
    EXPECT_NEAR(end.y, 0.0, 1e-12);
  }
}

TEST(ArmPoint, DomainErrors) {
  EXPECT_THROW(arm_point(-0.1, Arm::kBlue, 1), DomainError);
  EXPECT_THROW(arm_point(1.1, Arm::kBlue, 1), DomainError);
  EXPECT_THROW(arm_point(0.5, Arm::kBlue, 0), DomainError);
  EXPECT_THROW(arm_point(std::nan(""), Arm::kBlue, 1), DomainError);
}

TEST(Generate, NoiselessTrainingSet) {
  const SpiralSpec spec{1, 0.0, 50, 1};
  const Dataset d = generate(spec, 50, Purpose::kTrain);
  ASSERT_EQ(d.size(), 50u);
  int pos = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& p = d.points[i];
    EXPECT_EQ(p.label, i % 2 == 0 ? 1 : -1);
    pos += p.label > 0;
    EXPECT_LE(p.x * p.x + p.y * p.y, 1.0 + 1e-12);
  }
  EXPECT_EQ(pos, 25);
}

TEST(Generate, Deterministic) {
  const SpiralSpec spec{2, 0.15, 100, 4};
  const Dataset a = generate(spec, 100, Purpose::kTrain);
  const Dataset b = generate(spec, 100, Purpose::kTrain);
  EXPECT_EQ(a.points, b.points);
}

TEST(Generate, TrainAndTestStreamsDiffer) {
  const SpiralSpec spec{2, 0.05, 100, 1};
  const Dataset train = generate(spec, 100, Purpose::kTrain);
  const Dataset test = generate(spec, 100, Purpose::kTest);
  EXPECT_NE(train.points, test.points);
  // Test stream is the train stream of the offset seed.
  SpiralSpec shifted = spec;
  shifted.data_seed += kTestSeedOffset;
  EXPECT_EQ(test.points, generate(shifted, 100, Purpose::kTrain).points);
}

TEST(Generate, PrefixStable) {
  // The i-th point does not depend on n.
  const SpiralSpec spec{3, 0.05, 50, 2};
  const Dataset small = generate(spec, 10, Purpose::kTest);
  const Dataset big = generate(spec, 1000, Purpose::kTest);
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small.points[i], big.points[i]);
}

TEST(Generate, LargeNoisyTestSetBalanceAndTail) {
  const SpiralSpec spec{2, 0.05, 100, 3};
  const Dataset d = generate(spec, 10000, Purpose::kTest);
  int pos = 0;
  int inside = 0;
  const double radius = 1.0 + 4.0 * spec.noise_sigma;
  for (const auto& p : d.points) {
    pos += p.label > 0;
    inside += std::hypot(p.x, p.y) <= radius;
  }
  EXPECT_EQ(pos, 5000);
  // A 2-D isotropic Gaussian exceeds 4 sigma with probability exp(-8) ~ 3.4e-4,
  // so the 99% floor leaves a wide margin.
  EXPECT_GE(inside, 9900);
}

TEST(Generate, NoiseHasRequestedScale) {
  // The noise is the gap between the noisy and noiseless point, same stream.
  const SpiralSpec noisy{1, 0.15, 50, 9};
  const SpiralSpec clean{1, 0.0, 50, 9};
  const Dataset a = generate(noisy, 4000, Purpose::kTrain);
  const Dataset b = generate(clean, 4000, Purpose::kTrain);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a.points[i].x - b.points[i].x;
    const double dy = a.points[i].y - b.points[i].y;
    sum += dx + dy;
    sq += dx * dx + dy * dy;
  }
  const double n = 2.0 * static_cast<double>(a.size());
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / n), 0.15, 0.01);
}

TEST(Generate, LabelBalanceForOddSizes) {
  for (int n : {1, 2, 3, 7, 51}) {
    const Dataset d = generate({1, 0.0, 50, 1}, n, Purpose::kTrain);
    int diff = 0;
    for (const auto& p : d.points) diff += p.label;
    EXPECT_LE(std::abs(diff), 1);
  }
}

TEST(Generate, DomainErrors) {
  EXPECT_THROW(generate({1, 0.0, 50, 1}, 0, Purpose::kTrain), DomainError);
  EXPECT_THROW(generate({0, 0.0, 50, 1}, 5, Purpose::kTrain), DomainError);
  EXPECT_THROW(generate({1, -0.1, 50, 1}, 5, Purpose::kTrain), DomainError);
}

TEST(PaperPreset, Counts) {
  const auto specs = paper_preset_specs();
  EXPECT_EQ(specs.size(), 135u);
  std::set<std::tuple<int, int, double>> variations;
  for (const auto& s : specs) {
    variations.insert({s.num_train, s.loops, s.noise_sigma});
    EXPECT_GE(s.data_seed, 1);
    EXPECT_LE(s.data_seed, 5);
  }
  EXPECT_EQ(variations.size(), 27u);
}

TEST(PaperPreset, SeedMajorOrdering) {
  const auto specs = paper_preset_specs();
  for (std::size_t v = 0; v < 27; ++v)
    for (std::size_t s = 0; s < 5; ++s) {
      const auto& spec = specs[v * 5 + s];
      EXPECT_EQ(spec.data_seed, static_cast<std::int64_t>(s + 1));
      EXPECT_EQ(spec.num_train, specs[v * 5].num_train);
      EXPECT_EQ(spec.loops, specs[v * 5].loops);
      EXPECT_EQ(spec.noise_sigma, specs[v * 5].noise_sigma);
    }
}

}  // namespace
}  // namespace gapkit
