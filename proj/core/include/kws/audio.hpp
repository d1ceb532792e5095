// Audio ingestion: WAV loading, resampling, SNR-controlled mixing, synthetic
// corpus generation, and evaluation-stream assembly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/common.hpp"

namespace kws {

inline constexpr int kSampleRate = 16000;
// Analysis window: 1.024 s, sixteen wavelet/FFT frames of 1024 samples.
inline constexpr int kClipSamples = 16384;
inline constexpr int kFrameLen = 1024;
inline constexpr int kNumFrames = 16;

enum class Label : uint8_t { Yes = 0, No = 1, NoiseOnly = 2 };

const char* label_name(Label l);

struct AudioClip {
  std::vector<int16_t> samples;
  int sample_rate = kSampleRate;
  std::optional<Label> label;

  int length() const { return static_cast<int>(samples.size()); }
  double duration_s() const { return double(samples.size()) / sample_rate; }
};

// Wavelet-denoised clip, 8-bit sample domain.
struct AudioClip8 {
  std::vector<int8_t> samples;
  int sample_rate = kSampleRate;
  std::optional<Label> label;

  int length() const { return static_cast<int>(samples.size()); }
};

struct NoiseRecording {
  std::vector<int16_t> samples; // 16 kHz
  std::string environment;     // DWASHING/NFIELD/OOFFICE/TCAR or synthetic kind

  double duration_s() const { return double(samples.size()) / kSampleRate; }
};

struct MixSpec {
  double snr_db = 0.0;
  double noise_offset_s = 0.0;
  uint64_t seed = 0;
};

// RIFF/WAVE PCM16, mono or stereo, any common rate. Stereo is averaged to
// mono before resampling; output is always 16 kHz.
AudioClip load_wav(const std::filesystem::path& path);

// Windowed-sinc anti-aliased resampler. src_rate == 16000 returns the input.
std::vector<int16_t> resample_to_16k(std::span<const int16_t> samples, int src_rate);

// clean + g * noise_segment, g = sqrt(P_clean / (P_noise * 10^(snr/10))),
// P = mean squared sample value; sum saturated to the 16-bit range.
AudioClip mix_at_snr(const AudioClip& clean, const NoiseRecording& noise, const MixSpec& spec);

// Pad with trailing zeros / truncate to the analysis window (kClipSamples).
AudioClip fit_to_window(AudioClip clip);

// Two synthetic keyword families (distinct chirp profiles), n clips each,
// every clip exactly kClipSamples long. Deterministic per seed.
std::vector<AudioClip> synth_test_corpus(int n_per_class, uint64_t seed);

enum class SynthNoiseKind { White, Pink, Babble };

SynthNoiseKind synth_noise_kind_from_name(const std::string& name); // WHITE/PINK/BABBLE
NoiseRecording synth_noise_recording(SynthNoiseKind kind, double seconds, uint64_t seed);

// GSCD v2 layout: <root>/<keyword>/*.wav. Clips fitted to the analysis window.
std::vector<AudioClip> load_gscd_class(const std::filesystem::path& root, Label label,
                                       int limit = 0);
std::vector<std::filesystem::path> list_gscd_files(const std::filesystem::path& root,
                                                   Label label);
// DEMAND layout: <root>/<ENV>/ch01.wav (first channel of the environment).
NoiseRecording load_demand(const std::filesystem::path& root, const std::string& environment);

// Composition of one inter-retraining interval. Defaults reproduce the
// evaluated setup: 1024 inputs of which 64 are "Yes" and 64 are "No" mixes,
// the remainder noise-only segments.
struct StreamSpec {
  int interval = 1024;
  int yes_per_interval = 64;
  int no_per_interval = 64;
  int intervals = 25;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

// Gain that brings the recording to the environment's deployed level: the
// level at which a keyword of pool-average power sits at snr_db against it.
// Applied to noise-only stream segments and to the noise clips captured for
// rehearsal augmentation, so the simulated environment is coherent.
double environment_noise_gain(std::span<const AudioClip> keyword_pool,
                              const NoiseRecording& noise, double snr_db);

// A clip-length segment of the recording at the deployed level.
AudioClip noise_segment_at_gain(const NoiseRecording& noise, size_t offset, double gain);

// One interval block of the deployment stream (spec.interval clips).
// Keyword items are clean pool clips mixed with the recording at random
// offsets; noise-only items are raw recording segments. Order shuffled
// within the interval; deterministic per (spec.seed, interval_index).
std::vector<AudioClip> build_stream_interval(std::span<const AudioClip> keyword_pool,
                                             const NoiseRecording& noise,
                                             const StreamSpec& spec, int interval_index);

// The whole stream materialized (interval * intervals clips); prefer the
// per-interval form for long runs.
std::vector<AudioClip> build_stream(std::span<const AudioClip> keyword_pool,
                                    const NoiseRecording& noise, const StreamSpec& spec);

double mean_power(std::span<const int16_t> samples);

} // namespace kws
