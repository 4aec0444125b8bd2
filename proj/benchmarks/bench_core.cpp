#include <random>

#include <benchmark/benchmark.h>

#include "opcm/objectives.hpp"
#include "opcm/optimizer.hpp"
#include "opcm/synth.hpp"
#include "opcm/velocity.hpp"
#include "opcm/warp.hpp"

using namespace opcm;

namespace {

const SyntheticData& scene() {
  static const SyntheticData data = [] {
    SceneSpec spec;
    spec.motion.v = Vec3(-0.2, 0.1, 0.3);
    return generate_events(spec);
  }();
  return data;
}

void BM_BuildIwe(benchmark::State& state) {
  const auto& d = scene();
  const MotionField field({4, 4}, d.events.sensor(), Vec2(20, -10));
  const auto warped = warp_events(d.events, field, 0.05);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_iwe(warped, d.events.sensor(), 1.0, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(d.events.size()));
}
BENCHMARK(BM_BuildIwe);

void BM_ObjectiveWithGradient(benchmark::State& state) {
  const auto& d = scene();
  const int g = static_cast<int>(state.range(0));
  const Priors priors = make_priors(CameraModel(100, 100, 63.5, 47.5, {128, 96}), d.velocity);
  const HybridObjective obj(d.events, d.events.window(), priors, preset("mvsec"));
  const MotionField field({g, g}, d.events.sensor(), Vec2(20, -10));
  Eigen::VectorXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(obj.analytic_gradient(field, grad));
}
BENCHMARK(BM_ObjectiveWithGradient)->Arg(1)->Arg(4)->Arg(8);

void BM_Icp(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud src;
  for (int i = 0; i < state.range(0); ++i) src.points.emplace_back(3 * u(rng), 2 * u(rng), u(rng));
  const RigidTransform T{rotation_exp(Vec3(0, 0, 0.05)), Vec3(0.1, 0, 0)};
  PointCloud dst;
  for (const Vec3& p : src.points) dst.points.push_back(T.apply(p));
  for (auto _ : state) benchmark::DoNotOptimize(icp_register(src, dst));
}
BENCHMARK(BM_Icp)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
