#include <benchmark/benchmark.h>

#include "kws/cl.hpp"
#include "kws/harness.hpp"

namespace {

using namespace kws;

const AudioClip& noisy_clip() {
  static const AudioClip clip = [] {
    const auto corpus = synth_test_corpus(1, 7);
    const auto noise = synth_noise_recording(SynthNoiseKind::White, 4.0, 8);
    return mix_at_snr(corpus[0], noise, {0.0, 0.5, 0});
  }();
  return clip;
}

const FeaturePair& denoised_pair() {
  static const FeaturePair pair = runtime_features(noisy_clip(), CLConfig{});
  return pair;
}

const DualKwsModel& model() {
  static const DualKwsModel m = make_dual_model(7);
  return m;
}

const QuantizedModel& qmodel() {
  static const QuantizedModel qm = [] {
    std::vector<FeaturePair> calib(16, denoised_pair());
    return quantize_model(model(), calibrate(model(), calib));
  }();
  return qm;
}

void BM_WaveletDenoiseClip(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(denoise_clip(noisy_clip()));
}
BENCHMARK(BM_WaveletDenoiseClip);

void BM_ExtractPair(benchmark::State& state) {
  const AudioClip8 clip8 = denoise_clip(noisy_clip());
  for (auto _ : state) benchmark::DoNotOptimize(extract_pair(clip8));
}
BENCHMARK(BM_ExtractPair);

void BM_SpectralDenoisePair(benchmark::State& state) {
  const FeaturePair raw = extract_pair(denoise_clip(noisy_clip()));
  const DenoiseConfig cfg{0.5f};
  for (auto _ : state) benchmark::DoNotOptimize(denoise_pair(raw, cfg));
}
BENCHMARK(BM_SpectralDenoisePair);

void BM_FloatForward(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(forward(model(), denoised_pair()));
}
BENCHMARK(BM_FloatForward);

void BM_Backward(benchmark::State& state) {
  DualKwsModel grads = zero_like(model());
  for (auto _ : state) {
    benchmark::DoNotOptimize(backward_accumulate(model(), denoised_pair(), 1.0f, grads));
  }
}
BENCHMARK(BM_Backward);

void BM_QuantizedInference(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(quantized_inference(qmodel(), denoised_pair()));
}
BENCHMARK(BM_QuantizedInference);

void BM_MaeDistance(benchmark::State& state) {
  std::vector<float> a(320), b(320);
  SeededRng rng(3);
  for (float& v : a) v = float(rng.normal());
  for (float& v : b) v = float(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(mae_distance(a, b));
}
BENCHMARK(BM_MaeDistance);

void BM_FullRuntimePipeline(benchmark::State& state) {
  const CLConfig cfg;
  for (auto _ : state) {
    const FeaturePair p = runtime_features(noisy_clip(), cfg);
    benchmark::DoNotOptimize(quantized_inference(qmodel(), p));
  }
}
BENCHMARK(BM_FullRuntimePipeline);

} // namespace

BENCHMARK_MAIN();
