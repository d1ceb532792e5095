#include "kws/wavelet.hpp"

#include <algorithm>
#include <cmath>

namespace kws {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;

double median_sorted(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
} // namespace

WaveletFrame haar_decompose(std::span<const double> frame) {
  if (frame.size() != size_t(kWaveletFrameLen))
    fail(ErrorKind::Shape, "wavelet frame must have 1024 samples");
  WaveletFrame out;
  const size_t half = frame.size() / 2;
  out.approx.resize(half);
  out.detail.resize(half);
  for (size_t i = 0; i < half; ++i) {
    out.approx[i] = (frame[2 * i] + frame[2 * i + 1]) * kInvSqrt2;
    out.detail[i] = (frame[2 * i] - frame[2 * i + 1]) * kInvSqrt2;
  }
  return out;
}

std::vector<double> haar_reconstruct(const WaveletFrame& frame) {
  if (frame.approx.size() != frame.detail.size())
    fail(ErrorKind::Shape, "approx/detail length mismatch");
  std::vector<double> out(frame.approx.size() * 2);
  for (size_t i = 0; i < frame.approx.size(); ++i) {
    out[2 * i] = (frame.approx[i] + frame.detail[i]) * kInvSqrt2;
    out[2 * i + 1] = (frame.approx[i] - frame.detail[i]) * kInvSqrt2;
  }
  return out;
}

double mad_sigma(std::span<const double> detail) {
  if (detail.empty()) fail(ErrorKind::Shape, "empty detail sequence");
  std::vector<double> tmp(detail.begin(), detail.end());
  const double med = median_sorted(tmp);
  for (double& v : tmp) v = std::abs(v - med);
  return median_sorted(tmp) / 0.6745;
}

double universal_threshold(double mad, int n) {
  return mad * std::sqrt(2.0 * std::log(double(n)));
}

std::vector<double> soft_threshold(std::span<const double> coeffs, double tau) {
  std::vector<double> out(coeffs.size());
  for (size_t i = 0; i < coeffs.size(); ++i) {
    const double c = coeffs[i];
    const double mag = std::abs(c) - tau;
    out[i] = mag > 0.0 ? (c > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

AudioClip8 denoise_clip(const AudioClip& clip, const WaveletOptions& opts) {
  const size_t len = clip.samples.size();
  const size_t n_frames = (len + kWaveletFrameLen - 1) / kWaveletFrameLen;

  AudioClip8 out;
  out.sample_rate = clip.sample_rate;
  out.label = clip.label;
  out.samples.resize(len);
  if (opts.tau_trace) opts.tau_trace->clear();

  std::vector<double> frame(kWaveletFrameLen);
  for (size_t f = 0; f < n_frames; ++f) {
    const size_t base = f * kWaveletFrameLen;
    const size_t have = std::min(size_t(kWaveletFrameLen), len - base);
    for (size_t i = 0; i < have; ++i) frame[i] = clip.samples[base + i];
    std::fill(frame.begin() + long(have), frame.end(), 0.0);

    WaveletFrame wf = haar_decompose(frame);
    double tau = 0.0;
    if (opts.enable_threshold) {
      tau = universal_threshold(mad_sigma(wf.detail), kWaveletFrameLen);
      wf.detail = soft_threshold(wf.detail, tau);
    }
    if (opts.tau_trace) opts.tau_trace->push_back(tau);

    const std::vector<double> rec = haar_reconstruct(wf);
    for (size_t i = 0; i < have; ++i) {
      out.samples[base + i] = sat_i8(round_half_away(rec[i] / 256.0));
    }
  }
  return out;
}

AudioClip8 quantize_to_8bit(const AudioClip& clip) {
  AudioClip8 out;
  out.sample_rate = clip.sample_rate;
  out.label = clip.label;
  out.samples.resize(clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    out.samples[i] = sat_i8(round_half_away(clip.samples[i] / 256.0));
  }
  return out;
}

} // namespace kws
