#include "gapkit/spiral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gapkit/error.hpp"
#include "gapkit/rng.hpp"

namespace gapkit {

Point2 arm_point(double u, Arm arm, int loops) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("arm_point: u must lie in [0, 1]");
  if (loops < 1) throw DomainError("arm_point: loops must be >= 1");
  const double theta = 2.0 * std::numbers::pi * loops * u;
  Point2 p{u * std::cos(theta), u * std::sin(theta)};
  if (arm == Arm::kRed) {
    p.x = -p.x;
    p.y = -p.y;
  }
  return p;
}

Dataset generate(const SpiralSpec& spec, int n, Purpose purpose) {
  if (n < 1) throw DomainError("generate: n must be >= 1, got " + std::to_string(n));
  if (spec.loops < 1) throw DomainError("generate: loops must be >= 1");
  if (spec.noise_sigma < 0.0) throw DomainError("generate: noise_sigma must be >= 0");

  const std::int64_t seed =
      purpose == Purpose::kTrain ? spec.data_seed : spec.data_seed + kTestSeedOffset;
  Rng rng(static_cast<std::uint64_t>(seed));

  Dataset data;
  data.spec = spec;
  data.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool blue = (i % 2) == 0;
    const double u = uniform01(rng);
    const double nx = standard_normal(rng);
    const double ny = standard_normal(rng);
    const Point2 p = arm_point(u, blue ? Arm::kBlue : Arm::kRed, spec.loops);
    data.points.push_back({p.x + spec.noise_sigma * nx, p.y + spec.noise_sigma * ny, blue ? 1 : -1});
  }
  return data;
}

Dataset generate_train(const SpiralSpec& spec) {
  return generate(spec, spec.num_train, Purpose::kTrain);
}

std::vector<SpiralSpec> spec_grid(const std::vector<int>& sizes, const std::vector<int>& loops,
                                  const std::vector<double>& sigmas,
                                  const std::vector<std::int64_t>& seeds) {
  std::vector<SpiralSpec> out;
  out.reserve(sizes.size() * loops.size() * sigmas.size() * seeds.size());
  for (int m : sizes)
    for (int k : loops)
      for (double s : sigmas)
        for (std::int64_t seed : seeds) out.push_back({k, s, m, seed});
  return out;
}

std::vector<SpiralSpec> paper_preset_specs() {
  return spec_grid({50, 100, 200}, {1, 2, 3}, {0.0, 0.05, 0.15}, {1, 2, 3, 4, 5});
}

}  // namespace gapkit
