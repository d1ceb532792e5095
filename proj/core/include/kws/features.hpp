// Feature extraction: 20x16 LogMel and MFCC maps from a denoised clip, plus
// the binary record format used by the rehearsal buffer.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kws/audio.hpp"

namespace kws {

inline constexpr int kNumBands = 20;
inline constexpr int kFeatureCols = kNumFrames; // 16
inline constexpr int kFeatureSize = kNumBands * kFeatureCols;
inline constexpr float kLogFloor = 1e-6f;

enum class FeatureKind : uint8_t { MFCC = 0, LogMel = 1 };

// 20x16 matrix, rows = band/coefficient index, columns = frame index.
struct FeatureMap {
  FeatureKind kind = FeatureKind::LogMel;
  std::array<float, kFeatureSize> v{};

  float& at(int band, int frame) { return v[size_t(band * kFeatureCols + frame)]; }
  float at(int band, int frame) const { return v[size_t(band * kFeatureCols + frame)]; }
};

enum class Provenance : uint8_t { Runtime = 0, Rehearsal = 1, Augmented = 2 };

struct FeaturePair {
  FeatureMap mfcc{FeatureKind::MFCC};
  FeatureMap logmel{FeatureKind::LogMel};
  std::optional<Label> label;
  Provenance provenance = Provenance::Runtime;
};

// 20 triangular filters over the 513-bin power spectrum, 0..8000 Hz,
// mel-spaced centers. Built once, shared read-only.
struct MelFilterbank {
  struct Triangle {
    int first_bin = 0;
    std::vector<float> w; // contiguous nonnegative weights
  };
  std::array<Triangle, kNumBands> triangles;

  static const MelFilterbank& instance();
};

// Clip zero-padded to kClipSamples; 16 non-overlapping frames of 1024.
// Clips longer than the analysis window are a shape error.
std::vector<std::array<float, kFrameLen>> frame_clip(const AudioClip8& clip);

// Hann window, magnitude-squared spectrum, filterbank energies, log(e + eps).
std::array<float, kNumBands> logmel_frame(std::span<const float, kFrameLen> frame,
                                          const MelFilterbank& fb);

// Orthonormal DCT-II of the 20 log-energies; all coefficients retained.
std::array<float, kNumBands> mfcc_frame(std::span<const float, kNumBands> logmel);

// Both 20x16 maps from the 16 frames; the MFCC columns are the DCT of the
// emitted LogMel columns (shared intermediate).
FeaturePair extract_pair(const AudioClip8& clip);

// Little-endian binary records (documented in docs/FORMATS.md).
void write_feature_map(std::ostream& out, const FeatureMap& map);
FeatureMap read_feature_map(std::istream& in);
void write_feature_pair(std::ostream& out, const FeaturePair& pair);
FeaturePair read_feature_pair(std::istream& in);

namespace detail {
// Real-input FFT, n = kFrameLen; out holds bins 0..n/2 as (re, im).
void rfft1024(const double* in, std::array<std::array<double, 2>, kFrameLen / 2 + 1>& out);
} // namespace detail

} // namespace kws
