#pragma once

#include <cstdint>
#include <vector>

namespace gapkit {

// Recipe for one spiral dataset: loops k, per-coordinate noise sigma, training
// size m and the generation seed.
struct SpiralSpec {
  int loops = 1;
  double noise_sigma = 0.0;
  int num_train = 50;
  std::int64_t data_seed = 1;

  bool operator==(const SpiralSpec&) const = default;
};

enum class Arm { kBlue, kRed };
enum class Purpose { kTrain, kTest };

struct LabeledPoint {
  double x = 0.0;
  double y = 0.0;
  int label = 1;  // +1 blue, -1 red

  bool operator==(const LabeledPoint&) const = default;
};

struct Dataset {
  SpiralSpec spec;
  std::vector<LabeledPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Offset added to data_seed for the test stream so train and test draws never overlap.
inline constexpr std::int64_t kTestSeedOffset = std::int64_t{1} << 31;

// Noiseless point at arm parameter u in [0,1]: theta = 2*pi*k*u, r = u for the
// blue arm; the red arm is the blue arm rotated by pi.
Point2 arm_point(double u, Arm arm, int loops);

// n points alternating blue/red, u ~ U[0,1), iid N(0, sigma^2) noise per
// coordinate. The stream depends only on (spec.data_seed, purpose).
Dataset generate(const SpiralSpec& spec, int n, Purpose purpose);

// Training set of spec.num_train points.
Dataset generate_train(const SpiralSpec& spec);

// {50,100,200} x {1,2,3} x {0,0.05,0.15} x seeds {1..5}: 135 specs, ordered
// seed-major so specs [v*5, v*5+5) share one variation.
std::vector<SpiralSpec> paper_preset_specs();

// Cartesian product helper used by the run presets. Ordered by variation
// (m, then k, then sigma), then seed.
std::vector<SpiralSpec> spec_grid(const std::vector<int>& sizes, const std::vector<int>& loops,
                                  const std::vector<double>& sigmas,
                                  const std::vector<std::int64_t>& seeds);

}  // namespace gapkit
