// Shared test utilities: temp-file WAV writer, a small trained model
// fixture, and tolerance helpers.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kws/cl.hpp"
#include "kws/harness.hpp"

namespace kws::test {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "kws_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

// Minimal PCM16 WAV writer (interleaved when stereo).
inline void write_wav(const std::filesystem::path& path, std::span<const int16_t> samples,
                      int rate, int channels = 1) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  const uint32_t data_len = uint32_t(samples.size() * 2);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1); // PCM
  u16(uint16_t(channels));
  u32(uint32_t(rate));
  u32(uint32_t(rate * channels * 2));
  u16(uint16_t(channels * 2));
  u16(16);
  out.write("data", 4);
  u32(data_len);
  out.write(reinterpret_cast<const char*>(samples.data()), std::streamsize(data_len));
}

struct TrainedFixture {
  std::vector<FeaturePair> train_raw; // pre-spectral
  std::vector<FeaturePair> train_dn;  // spectral-denoised
  std::vector<FeaturePair> test_dn;
  DualKwsModel model;
  QuantizedModel qm;
  ArtifactSet artifacts;
  RehearsalBuffer rehearsal;

  CLState make_state(uint64_t seed = 99) const {
    CLState s;
    s.model = model;
    s.qm = qm;
    s.artifacts = artifacts;
    s.rehearsal = rehearsal;
    s.seed = seed;
    return s;
  }
};

// Small synthetic corpus trained to convergence; built once per binary.
inline const TrainedFixture& trained_fixture() {
  static const TrainedFixture fx = [] {
    TrainedFixture f;
    const auto corpus = synth_test_corpus(16, 42);
    const DenoiseConfig dn{0.5f};
    int iy = 0, in_ = 0;
    for (const AudioClip& c : corpus) {
      int& idx = *c.label == Label::Yes ? iy : in_;
      FeaturePair raw = clean_features(c, true);
      if (idx < 12) {
        f.train_raw.push_back(raw);
        f.train_dn.push_back(denoise_pair(raw, dn));
      } else {
        f.test_dn.push_back(denoise_pair(raw, dn));
      }
      ++idx;
    }
    f.model = make_dual_model(42);
    TrainConfig tc;
    tc.epochs = 2200;
    tc.seed = 42;
    train(f.model, f.train_dn, tc);
    f.qm = quantize_model(f.model, calibrate(f.model, f.train_dn));
    f.rehearsal = make_rehearsal_buffer(f.train_raw, 8);
    std::vector<LabeledLatent> latents;
    for (const FeaturePair& e : f.rehearsal.entries) {
      const FeaturePair d = denoise_pair(e, dn);
      const QuantInference qi = quantized_inference(f.qm, d);
      latents.push_back({dequantize_latent(f.qm, qi.latent_q), *e.label});
    }
    f.artifacts = compute_artifacts(latents, 2.0);
    return f;
  }();
  return fx;
}

} // namespace kws::test
