#include <memory>

#include <benchmark/benchmark.h>

#include "gdalab/dynamics.hpp"
#include "gdalab/genmodel.hpp"
#include "gdalab/stability.hpp"

namespace {

std::shared_ptr<const gdalab::ProblemInstance> instance(int k, int n) {
  gdalab::ModelConfig c;
  c.m = 4;
  c.d = 4;
  c.k = k;
  c.n = n;
  c.seed = 7;
  return std::make_shared<const gdalab::ProblemInstance>(gdalab::sample_problem(c));
}

void BM_Forward(benchmark::State& state) {
  const gdalab::GeneratorMap f(instance(static_cast<int>(state.range(0)), 64));
  const gdalab::Vector theta = f.initial_theta();
  for (auto _ : state) benchmark::DoNotOptimize(f.evaluate(theta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->RangeMultiplier(4)->Range(256, 16384);

void BM_ValueAndVjp(benchmark::State& state) {
  auto inst = instance(static_cast<int>(state.range(0)), 64);
  const gdalab::GeneratorMap f(inst);
  const gdalab::Vector theta = f.initial_theta();
  gdalab::Vector value, vjp;
  for (auto _ : state) {
    f.value_and_vjp(theta, inst->xbar, value, vjp);
    benchmark::DoNotOptimize(vjp.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ValueAndVjp)->RangeMultiplier(4)->Range(256, 16384);

void BM_JacobianGram(benchmark::State& state) {
  const gdalab::GeneratorMap f(instance(static_cast<int>(state.range(0)), 64));
  const gdalab::Vector theta = f.initial_theta();
  for (auto _ : state) benchmark::DoNotOptimize(f.jacobian_gram(theta));
}
BENCHMARK(BM_JacobianGram)->RangeMultiplier(4)->Range(256, 16384);

void BM_DenseJacobian(benchmark::State& state) {
  const gdalab::GeneratorMap f(instance(static_cast<int>(state.range(0)), 64));
  const gdalab::Vector theta = f.initial_theta();
  for (auto _ : state) benchmark::DoNotOptimize(f.jacobian(theta));
}
BENCHMARK(BM_DenseJacobian)->RangeMultiplier(4)->Range(256, 4096);

void BM_GdaStep(benchmark::State& state) {
  auto inst = instance(static_cast<int>(state.range(0)), 64);
  const gdalab::GeneratorMap f(inst);
  gdalab::StepSchedule sched;
  sched.eta = 1e-6;
  sched.mu = 0.5;
  gdalab::GanState s = gdalab::initial_state(*inst);
  for (auto _ : state) s = gdalab::gda_step(s, f, inst->xbar, sched);
  benchmark::DoNotOptimize(s.theta.data());
}
BENCHMARK(BM_GdaStep)->RangeMultiplier(4)->Range(256, 16384);

void BM_SpectralRadius(benchmark::State& state) {
  const gdalab::Vector sv = gdalab::Vector::LinSpaced(state.range(0), 0.5, 2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gdalab::spectral_radius_closed_form(sv, 1e-3, 0.5));
  }
}
BENCHMARK(BM_SpectralRadius)->Arg(16)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
