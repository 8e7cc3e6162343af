#include <benchmark/benchmark.h>

#include <array>
#include <random>

#include "mtlsed/model.hpp"
#include "mtlsed/nn/ops.hpp"

using namespace mtlsed;

namespace {

LogMel noise(std::size_t bins, std::size_t frames) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  LogMel f;
  f.mel_bins = bins;
  f.frames = frames;
  f.values.resize(bins * frames);
  for (auto& v : f.values) v = n(rng);
  return f;
}

// range(0): 0 = desk default, 1 = tiny(32)
ModelConfig config(std::int64_t which) { return which == 0 ? ModelConfig{} : ModelConfig::tiny(32); }

void BM_Predict(benchmark::State& state) {
  const ModelConfig c = config(state.range(0));
  const Model m(c, 1);
  const LogMel f = noise(c.mel_bins, c.input_frames);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(f));
  state.counters["params"] = static_cast<double>(m.param_count());
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const ModelConfig c = config(state.range(0));
  Model m(c, 1);
  const LogMel f = noise(c.mel_bins, c.input_frames);
  const auto x = features_to_tensor<float>(f);
  for (auto _ : state) {
    nn::Tape<float> tape;
    auto out = m.forward(tape, tape.constant(x), true);
    const std::vector<float> zs(tape.value(out.sed_frame).size()), za(tape.value(out.acc_frame).size());
    const std::array<nn::Var, 2> terms{nn::bce_sum(tape, out.sed_frame, zs), nn::bce_sum(tape, out.acc_frame, za)};
    const std::array<float, 2> weights{0.8f, 0.2f};
    auto loss = nn::weighted_sum<float>(tape, terms, weights);
    tape.backward(loss);
    m.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
