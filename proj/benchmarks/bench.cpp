#include <benchmark/benchmark.h>

#include "rbw/arch/archzoo.hpp"
#include "rbw/harness/harness.hpp"
#include "rbw/ib/ibcalc.hpp"
#include "rbw/num/ops.hpp"
#include "rbw/num/rng.hpp"
#include "rbw/task/taskgen.hpp"

namespace {

using namespace rbw;

num::Tensor gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  num::Rng rng(seed);
  num::Tensor t({r, c});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = gaussian(n, n, 1), b = gaussian(n, n, 2);
  for (auto _ : state) {
    num::Tape tape;
    benchmark::DoNotOptimize(num::matmul(tape.constant(a), tape.constant(b)).value().values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity(benchmark::oNCubed);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = gaussian(n, n, 1), b = gaussian(n, n, 2);
  for (auto _ : state) {
    num::Tape tape;
    auto loss = num::sum(num::matmul(tape.parameter(a), tape.parameter(b)));
    tape.backward(loss);
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 128);

void BM_Forward(benchmark::State& state) {
  const auto a = static_cast<arch::Architecture>(state.range(0));
  const auto world = task::TaskWorld::build({});
  arch::ModelConfig c;
  c.arch = a;
  c = harness::fit_to_task(c, world);
  const auto params = arch::init_params(c);
  const auto data = world.generate(task::Side::Train, 16, 3);
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(arch::forward_logits(c, params, data[i++ % data.size()].episode.features));
  state.SetLabel(arch::to_string(a));
}
BENCHMARK(BM_Forward)->DenseRange(0, 5);

void BM_TrainStep(benchmark::State& state) {
  const auto a = static_cast<arch::Architecture>(state.range(0));
  const auto world = task::TaskWorld::build({});
  arch::ModelConfig c;
  c.arch = a;
  c = harness::fit_to_task(c, world);
  harness::TrainSchedule s;
  s.max_episodes = 16;
  s.eval_every = 1000000;
  s.eval_size = 1;
  for (auto _ : state) benchmark::DoNotOptimize(harness::train(c, world, s, 1).episodes_trained);
  state.SetLabel(arch::to_string(a));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

void BM_IbVerify(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ib::verify_relational_code(k, 1.0).passed());
}
BENCHMARK(BM_IbVerify)->DenseRange(3, 4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
