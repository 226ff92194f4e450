#include <benchmark/benchmark.h>

#include "pnshape/phase_noise.hpp"
#include "pnshape/shaping.hpp"

using namespace pnshape;

namespace {

FrameConfig bench_frame(int n_data) {
  FrameConfig f = FrameConfig::reference();
  const int scale = 3680 / n_data;
  f.n_data = n_data;
  f.ptrs_groups = std::max(1, 32 / scale);
  f.n_cp = std::max(4, 288 / scale);
  return f;
}

PhaseNoiseSetup bench_pn() {
  PhaseNoiseModel m;
  m.psd0 = 1e-4;
  m.ref_carrier_hz = 120e9;
  m.poles = {{1e4, 2.0}};
  m.zeros = {{4.5e7, 2.0}};
  PhaseNoiseSetup pn;
  pn.tx = m;
  pn.rx = m;
  return pn;
}

void BM_TransmitFilter(benchmark::State& state) {
  const FrameConfig f = FrameConfig::reference();
  const FilterTaps taps = rrc_taps(f.rolloff, f.span_symbols, f.oversampling);
  Rng rng(1);
  const BitMatrix bits = random_bits(f.n_data, 6, rng);
  const ComplexSignal up = upsample(transmit_block(f, baseline_qam(6), bits), f.oversampling);
  for (auto _ : state) benchmark::DoNotOptimize(convolve(up, taps.taps, ConvMode::kFull));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(up.size()));
}
BENCHMARK(BM_TransmitFilter)->Unit(benchmark::kMicrosecond);

void BM_PhaseNoiseGenerate(benchmark::State& state) {
  const auto m = *bench_pn().tx;
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate(m, n, 12.09e9, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PhaseNoiseGenerate)->Arg(4096)->Arg(16512)->Unit(benchmark::kMicrosecond);

void BM_Demap(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const Constellation c = baseline_qam(k);
  Rng rng(3);
  const BitMatrix bits = random_bits(3680, static_cast<std::size_t>(k), rng);
  const ComplexSignal s = map_bits(bits, c);
  for (auto _ : state) benchmark::DoNotOptimize(demap_llr(s, c, 0.05));
  state.SetItemsProcessed(state.iterations() * 3680);
}
BENCHMARK(BM_Demap)->Arg(4)->Arg(6)->Unit(benchmark::kMicrosecond);

void BM_FullFrame(benchmark::State& state) {
  const FrameConfig f = FrameConfig::reference();
  const FilterTaps taps = rrc_taps(f.rolloff, f.span_symbols, f.oversampling);
  const auto pn = bench_pn();
  const Constellation c = baseline_qam(6);
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_frame(f, c, 14.0, pn, rng));
}
BENCHMARK(BM_FullFrame)->Unit(benchmark::kMillisecond);

// Forward and reverse pass of the augmented loss on a per-frame tape.
void BM_TapeStep(benchmark::State& state) {
  const FrameConfig f = bench_frame(static_cast<int>(state.range(0)));
  const FilterTaps taps = rrc_taps(f.rolloff, f.span_symbols, f.oversampling);
  Rng rng(5);
  std::vector<FrameDraw> draws{draw_frame(f, 14.0, 1.0, bench_pn(), rng)};
  const auto w = weights_from_constellation(baseline_qam(6));
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_batch(w, f, draws, taps, 6.5, {0.1, 1.0}, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TapeStep)->Arg(256)->Arg(512)->Arg(3680)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
