#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "mtlsed/audiogen.hpp"
#include "mtlsed/eval.hpp"
#include "mtlsed/postprocess.hpp"
#include "mtlsed/training.hpp"

using namespace mtlsed;

namespace {

struct Fixture {
  std::vector<FramePosteriors> post;
  std::vector<EventLabel> truth;
};

// Validation-sized set: noisy versions of the rasterised ground truth.
const Fixture& fixture() {
  static const Fixture fx = [] {
    DatasetConfig dc;
    const auto ds = generate_dataset(dc, 7);
    Fixture f;
    std::mt19937_64 rng(11);
    std::normal_distribution<float> n(0.0f, 0.25f);
    const double hop = 0.064;
    for (const auto& r : ds.split(Split::Validation)) {
      const auto labels = r.labels();
      f.truth.insert(f.truth.end(), labels.begin(), labels.end());
      auto probs = rasterize(std::span<const EventLabel>(labels), 157, hop);
      for (auto& p : probs) p = std::clamp(0.15f + 0.7f * p + n(rng), 0.0f, 1.0f);
      f.post.push_back({r.clip_id, 157, std::move(probs), hop, 10.0});
    }
    return f;
  }();
  return fx;
}

void BM_EvaluateSystem(benchmark::State& state) {
  const auto& fx = fixture();
  const auto grid = default_threshold_grid(static_cast<std::size_t>(state.range(0)));
  const FilterLengths w = unit_filter_lengths();
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_system(fx.post, all_event_classes(), fx.truth, grid, w, PsdsParams::scenario1(),
                                             PsdsParams::scenario2()));
}
BENCHMARK(BM_EvaluateSystem)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_FilterSearch(benchmark::State& state) {
  const auto& fx = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(search_filter_lengths(fx.post, all_event_classes(), fx.truth));
}
BENCHMARK(BM_FilterSearch)->Unit(benchmark::kMillisecond);

void BM_MedianFilter(benchmark::State& state) {
  std::mt19937_64 rng(2);
  BinarySequence s{std::vector<std::uint8_t>(157), 0.064};
  for (auto& v : s.values) v = rng() & 1;
  const int w = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(median_filter(s, w));
}
BENCHMARK(BM_MedianFilter)->Arg(3)->Arg(41);

}  // namespace
