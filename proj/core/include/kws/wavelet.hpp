// First-stage waveform denoising: framed single-level Haar transform with
// VisuShrink universal soft thresholding, then 8-bit output quantization.
#pragma once

#include <span>
#include <vector>

#include "kws/audio.hpp"

namespace kws {

inline constexpr int kWaveletFrameLen = kFrameLen; // 1024

struct WaveletFrame {
  std::vector<double> approx; // N/2
  std::vector<double> detail; // N/2
};

struct DenoiseParams {
  double mad = 0.0; // noise scale estimate
  double tau = 0.0; // universal threshold, mad * sqrt(2*ln(N))
};

// approx[i] = (x[2i]+x[2i+1])/sqrt(2), detail[i] = (x[2i]-x[2i+1])/sqrt(2).
// Frame length must be exactly kWaveletFrameLen.
WaveletFrame haar_decompose(std::span<const double> frame);

std::vector<double> haar_reconstruct(const WaveletFrame& frame);

// median(|d - median(d)|) / 0.6745; even-length medians take the midpoint
// of the two central order statistics.
double mad_sigma(std::span<const double> detail);

// tau = mad * sqrt(2*ln(n)), natural log.
double universal_threshold(double mad, int n);

// y = sign(c) * max(|c| - tau, 0)
std::vector<double> soft_threshold(std::span<const double> coeffs, double tau);

struct WaveletOptions {
  bool enable_threshold = true;        // false forces tau = 0 (reconstruction path only)
  std::vector<double>* tau_trace = nullptr; // per-frame thresholds, if wanted
};

// Per non-overlapping 1024-sample frame: decompose, threshold details with
// that frame's own MAD-derived tau, reconstruct. Trailing partial frames are
// zero-padded for the transform and trimmed after. Output samples are scaled
// by 1/256 (round half away from zero) and saturated to [-128, 127].
AudioClip8 denoise_clip(const AudioClip& clip, const WaveletOptions& opts = {});

// The same fixed 16-bit to 8-bit mapping without the transform; used by the
// feature-domain augmentation path, which bypasses wavelet denoising.
AudioClip8 quantize_to_8bit(const AudioClip& clip);

} // namespace kws
