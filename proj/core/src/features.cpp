#include "kws/features.hpp"

#include <cmath>

#include "binio.hpp"

namespace kws {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kFftBins = kFrameLen / 2 + 1; // 513
constexpr double kMelHighHz = 8000.0;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// In-place complex FFT, n = 512, decimation in time.
void cfft512(std::array<double, 2>* a) {
  constexpr int n = kFrameLen / 2;
  static const auto rev = [] {
    std::array<uint16_t, n> r{};
    for (int i = 0; i < n; ++i) {
      int x = i, y = 0;
      for (int b = 0; b < 9; ++b) {
        y = (y << 1) | (x & 1);
        x >>= 1;
      }
      r[size_t(i)] = uint16_t(y);
    }
    return r;
  }();
  static const auto tw = [] {
    std::array<std::array<double, 2>, n / 2> t{};
    for (int i = 0; i < n / 2; ++i) {
      const double an = -2.0 * kPi * i / n;
      t[size_t(i)] = {std::cos(an), std::sin(an)};
    }
    return t;
  }();

  for (int i = 0; i < n; ++i) {
    if (rev[size_t(i)] > i) std::swap(a[i], a[rev[size_t(i)]]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int half = len >> 1;
    const int step = n / len;
    for (int base = 0; base < n; base += len) {
      for (int j = 0; j < half; ++j) {
        auto& u = a[base + j];
        auto& v = a[base + j + half];
        const auto& w = tw[size_t(j * step)];
        const double vr = v[0] * w[0] - v[1] * w[1];
        const double vi = v[0] * w[1] + v[1] * w[0];
        v = {u[0] - vr, u[1] - vi};
        u = {u[0] + vr, u[1] + vi};
      }
    }
  }
}

const std::array<float, kFrameLen>& hann_window() {
  static const auto w = [] {
    std::array<float, kFrameLen> h{};
    for (int i = 0; i < kFrameLen; ++i)
      h[size_t(i)] = float(0.5 - 0.5 * std::cos(2.0 * kPi * i / kFrameLen));
    return h;
  }();
  return w;
}

// Orthonormal DCT-II basis, 20x20.
const std::array<std::array<double, kNumBands>, kNumBands>& dct_basis() {
  static const auto m = [] {
    std::array<std::array<double, kNumBands>, kNumBands> b{};
    for (int k = 0; k < kNumBands; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / kNumBands) : std::sqrt(2.0 / kNumBands);
      for (int i = 0; i < kNumBands; ++i) {
        b[size_t(k)][size_t(i)] = s * std::cos(kPi * k * (2 * i + 1) / (2.0 * kNumBands));
      }
    }
    return b;
  }();
  return m;
}

} // namespace

namespace detail {

void rfft1024(const double* in, std::array<std::array<double, 2>, kFftBins>& out) {
  constexpr int n = kFrameLen;
  constexpr int h = n / 2;
  std::array<std::array<double, 2>, h> z;
  for (int k = 0; k < h; ++k) z[size_t(k)] = {in[2 * k], in[2 * k + 1]};
  cfft512(z.data());
  for (int k = 0; k <= h; ++k) {
    const auto& zk = z[size_t(k % h)];
    const auto& zm = z[size_t((h - k) % h)];
    const double fer = 0.5 * (zk[0] + zm[0]);
    const double fei = 0.5 * (zk[1] - zm[1]);
    const double for_ = 0.5 * (zk[1] + zm[1]);
    const double foi = -0.5 * (zk[0] - zm[0]);
    const double an = -2.0 * kPi * k / n;
    const double wr = std::cos(an), wi = std::sin(an);
    out[size_t(k)][0] = fer + wr * for_ - wi * foi;
    out[size_t(k)][1] = fei + wr * foi + wi * for_;
  }
}

} // namespace detail

const MelFilterbank& MelFilterbank::instance() {
  static const MelFilterbank fb = [] {
    MelFilterbank b;
    const double mel_hi = hz_to_mel(kMelHighHz);
    std::array<double, kNumBands + 2> edges_hz{};
    for (int j = 0; j < kNumBands + 2; ++j) {
      edges_hz[size_t(j)] = mel_to_hz(mel_hi * j / (kNumBands + 1));
    }
    const double bin_hz = double(kSampleRate) / kFrameLen;
    for (int m = 0; m < kNumBands; ++m) {
      const double fl = edges_hz[size_t(m)];
      const double fc = edges_hz[size_t(m + 1)];
      const double fr = edges_hz[size_t(m + 2)];
      std::vector<float> w;
      int first = -1;
      for (int k = 0; k < kFftBins; ++k) {
        const double f = k * bin_hz;
        double v = 0.0;
        if (f >= fl && f <= fc && fc > fl) v = (f - fl) / (fc - fl);
        else if (f > fc && f <= fr && fr > fc) v = (fr - f) / (fr - fc);
        if (v > 0.0) {
          if (first < 0) first = k;
          w.push_back(float(v));
        } else if (first >= 0) {
          break;
        }
      }
      b.triangles[size_t(m)].first_bin = first < 0 ? 0 : first;
      b.triangles[size_t(m)].w = std::move(w);
    }
    return b;
  }();
  return fb;
}

std::vector<std::array<float, kFrameLen>> frame_clip(const AudioClip8& clip) {
  if (clip.samples.size() > size_t(kClipSamples))
    fail(ErrorKind::Shape, "clip longer than the analysis window");
  std::vector<std::array<float, kFrameLen>> frames(kNumFrames);
  for (int f = 0; f < kNumFrames; ++f) {
    for (int i = 0; i < kFrameLen; ++i) {
      const size_t idx = size_t(f) * kFrameLen + size_t(i);
      frames[size_t(f)][size_t(i)] = idx < clip.samples.size() ? float(clip.samples[idx]) : 0.0f;
    }
  }
  return frames;
}

std::array<float, kNumBands> logmel_frame(std::span<const float, kFrameLen> frame,
                                          const MelFilterbank& fb) {
  const auto& win = hann_window();
  std::array<double, kFrameLen> x;
  for (int i = 0; i < kFrameLen; ++i) x[size_t(i)] = double(frame[size_t(i)]) * win[size_t(i)];

  std::array<std::array<double, 2>, kFftBins> spec;
  detail::rfft1024(x.data(), spec);

  std::array<double, kFftBins> power;
  for (int k = 0; k < kFftBins; ++k) {
    power[size_t(k)] = spec[size_t(k)][0] * spec[size_t(k)][0] +
                       spec[size_t(k)][1] * spec[size_t(k)][1];
  }

  std::array<float, kNumBands> out;
  for (int m = 0; m < kNumBands; ++m) {
    const auto& tri = fb.triangles[size_t(m)];
    double e = 0.0;
    for (size_t i = 0; i < tri.w.size(); ++i) {
      e += double(tri.w[i]) * power[size_t(tri.first_bin) + i];
    }
    out[size_t(m)] = float(std::log(e + double(kLogFloor)));
  }
  return out;
}

std::array<float, kNumBands> mfcc_frame(std::span<const float, kNumBands> logmel) {
  const auto& basis = dct_basis();
  std::array<float, kNumBands> out;
  for (int k = 0; k < kNumBands; ++k) {
    double acc = 0.0;
    for (int i = 0; i < kNumBands; ++i) acc += basis[size_t(k)][size_t(i)] * double(logmel[size_t(i)]);
    out[size_t(k)] = float(acc);
  }
  return out;
}

FeaturePair extract_pair(const AudioClip8& clip) {
  const auto frames = frame_clip(clip);
  const auto& fb = MelFilterbank::instance();

  FeaturePair pair;
  pair.label = clip.label;
  for (int c = 0; c < kFeatureCols; ++c) {
    const auto lm = logmel_frame(std::span<const float, kFrameLen>(frames[size_t(c)]), fb);
    const auto mf = mfcc_frame(lm); // same stored floats: shared intermediate
    for (int r = 0; r < kNumBands; ++r) {
      pair.logmel.at(r, c) = lm[size_t(r)];
      pair.mfcc.at(r, c) = mf[size_t(r)];
    }
  }
  return pair;
}

void write_feature_map(std::ostream& out, const FeatureMap& map) {
  binio::write_u8(out, uint8_t(map.kind));
  for (float v : map.v) binio::write_f32(out, v);
}

FeatureMap read_feature_map(std::istream& in) {
  FeatureMap map;
  const uint8_t kind = binio::read_u8(in);
  if (kind > 1) fail(ErrorKind::Format, "bad feature kind tag");
  map.kind = FeatureKind(kind);
  for (float& v : map.v) v = binio::read_f32(in);
  return map;
}

void write_feature_pair(std::ostream& out, const FeaturePair& pair) {
  binio::write_u8(out, pair.label ? uint8_t(*pair.label) : uint8_t(0xff));
  binio::write_u8(out, uint8_t(pair.provenance));
  write_feature_map(out, pair.mfcc);
  write_feature_map(out, pair.logmel);
}

FeaturePair read_feature_pair(std::istream& in) {
  FeaturePair pair;
  const uint8_t label = binio::read_u8(in);
  if (label != 0xff) {
    if (label > 2) fail(ErrorKind::Format, "bad label tag");
    pair.label = Label(label);
  }
  const uint8_t prov = binio::read_u8(in);
  if (prov > 2) fail(ErrorKind::Format, "bad provenance tag");
  pair.provenance = Provenance(prov);
  pair.mfcc = read_feature_map(in);
  pair.logmel = read_feature_map(in);
  if (pair.mfcc.kind != FeatureKind::MFCC || pair.logmel.kind != FeatureKind::LogMel)
    fail(ErrorKind::Format, "feature pair kinds out of order");
  return pair;
}

} // namespace kws
