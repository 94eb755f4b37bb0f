#include <benchmark/benchmark.h>

#include <random>

#include "captrack/controller.hpp"
#include "captrack/datagen.hpp"
#include "captrack/regressor.hpp"
#include "captrack/rng.hpp"
#include "captrack/scenarios.hpp"
#include "captrack/sensor.hpp"

using namespace captrack;

namespace {

const LimbModel& arm() {
  static const LimbModel limb = build_limb(arm_dressing_spec());
  return limb;
}

EePose hover_pose() {
  return pose_from_rel(arm(), 0.3, RelPose{0.01, 0.05, 0.1, -0.1});
}

}  // namespace

static void BM_ClosestPoint(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::vector<Vec3> queries;
  for (int i = 0; i < 1024; ++i) queries.emplace_back(uniform(gen, -0.6, 0.1), uniform(gen, -0.2, 0.2), uniform(gen, 0.8, 1.2));
  std::size_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(closest_point(arm(), queries[k++ & 1023]));
  }
}
BENCHMARK(BM_ClosestPoint);

static void BM_RelativePose(benchmark::State& state) {
  const EePose ee = hover_pose();
  for (auto _ : state) benchmark::DoNotOptimize(relative_pose(arm(), ee));
}
BENCHMARK(BM_RelativePose);

static void BM_Measure(benchmark::State& state) {
  const EePose ee = hover_pose();
  const MaterialMode mode = MaterialMode::defaults(Material::air_gown);
  const SensorLayout layout = SensorLayout::grid();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(measure(arm(), ee, layout, mode, seed++));
}
BENCHMARK(BM_Measure);

static void BM_Predict(benchmark::State& state) {
  const MlpParams params = MlpParams::he_uniform(1);
  std::mt19937_64 gen(2);
  std::vector<double> window(kWindowSize);
  for (auto& v : window) v = uniform(gen, 1.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(predict(params, window));
}
BENCHMARK(BM_Predict);

static void BM_CollectIteration(benchmark::State& state) {
  const LimbModel limb = build_limb(collection_spec(LimbKind::arm));
  const MaterialMode mode = MaterialMode::defaults(Material::air_gown);
  std::size_t records = 0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    collect_site(limb, 0.3 * limb.chain_length(), mode, 1, seed++, {},
                 [&](std::span<const double>, const RelPose&, std::uint32_t) { ++records; });
  }
  state.counters["records/s"] = benchmark::Counter(static_cast<double>(records), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_CollectIteration)->Unit(benchmark::kMillisecond);

static void BM_TrainEpoch(benchmark::State& state) {
  static const Dataset data = collect_limb(LimbKind::arm, MaterialMode::defaults(Material::air_gown), 5, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(data, cfg));
  state.counters["pairs"] = static_cast<double>(data.size());
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_OracleTrial(benchmark::State& state) {
  Scenario s;
  s.trials = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_trial(s, oracle_estimator(), 0));
}
BENCHMARK(BM_OracleTrial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
