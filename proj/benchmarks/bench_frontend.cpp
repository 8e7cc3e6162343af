#include <benchmark/benchmark.h>

#include "mtlsed/audiogen.hpp"
#include "mtlsed/frontend.hpp"

using namespace mtlsed;

namespace {

const Waveform& clip() {
  static const Waveform w = synth_clip({{EventClass::Speech, 1.0}, {EventClass::Dog, 6.0}}, -30.0, 1).first;
  return w;
}

void BM_LogMel(benchmark::State& state) {
  const int bins = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(log_mel(clip(), bins));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LogMel)->Arg(16)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
  const LogMel f = log_mel(clip(), 128);
  const AugmentPolicy p;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(filter_augment(spec_augment(f, p, seed), p, seed + 1)), ++seed;
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMicrosecond);

void BM_SynthClip(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(synth_clip({{EventClass::Vacuum_cleaner, 0.5}, {EventClass::Cat, 3.0}}, -30.0, ++seed));
}
BENCHMARK(BM_SynthClip)->Unit(benchmark::kMillisecond);

}  // namespace
