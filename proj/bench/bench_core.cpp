// Hot paths: one physics step, one 30 Hz control tick, rendering, and the
// kNN distance scan that dominates policy rollouts.
#include "dexforge/impedance.hpp"
#include "dexforge/kernels.hpp"
#include "dexforge/pipeline.hpp"
#include "dexforge/raster.hpp"
#include "dexforge/simulator.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dexforge;

namespace {

sim::Scene flip_box() { return sim::reset_task(sim::builtin_task("flip-box"), 3); }

void BM_PhysicsStep(benchmark::State& state) {
  auto scene = flip_box();
  const auto tau = sim::gravity_compensation(scene);
  for (auto _ : state) benchmark::DoNotOptimize(sim::advance(scene, tau));
}
BENCHMARK(BM_PhysicsStep);

void BM_ControlTick(benchmark::State& state) {
  auto scene = flip_box();
  const std::vector<Vec2> targets{sim::fingertip(scene, 0), sim::fingertip(scene, 1)};
  const int substeps = control::substeps_per_tick(scene, 30);
  for (auto _ : state) control::run_control_period(scene, {0, 1}, targets, control::default_gains(), substeps);
}
BENCHMARK(BM_ControlTick);

void BM_Raster(benchmark::State& state) {
  const auto scene = flip_box();
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sim::render_raster(scene, n, n));
}
BENCHMARK(BM_Raster)->Arg(16)->Arg(64);

void BM_RasterParallel(benchmark::State& state) {
  const auto scene = flip_box();
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sim::render_raster_parallel(scene, scene.camera, n, n));
}
BENCHMARK(BM_RasterParallel)->Arg(64);

MatX random_rows(int rows, int cols) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// 25 demos of ~40 windows with 256 pixels plus wrench channels per frame
void BM_Distances(benchmark::State& state) {
  const MatX m = random_rows(static_cast<int>(state.range(0)), 262);
  const VecX q = m.row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::squared_distances(m, q));
}
BENCHMARK(BM_Distances)->Arg(1000)->Arg(10000);

void BM_DistancesParallel(benchmark::State& state) {
  const MatX m = random_rows(static_cast<int>(state.range(0)), 262);
  const VecX q = m.row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::squared_distances_parallel(m, q));
}
BENCHMARK(BM_DistancesParallel)->Arg(10000);

void BM_PipelineSlideCube(benchmark::State& state) {
  const auto task = sim::builtin_task("slide-cube");
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::run_pipeline(task, 1000, {}, control::default_gains()));
}
BENCHMARK(BM_PipelineSlideCube)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
