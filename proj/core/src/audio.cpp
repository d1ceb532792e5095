#include "kws/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace kws {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t read_u32le(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint16_t read_u16le(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = kPi * x;
  return std::sin(px) / px;
}

} // namespace

const char* label_name(Label l) {
  switch (l) {
    case Label::Yes: return "Yes";
    case Label::No: return "No";
    case Label::NoiseOnly: return "noise";
  }
  return "?";
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Format, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::Format, "not a RIFF/WAVE file: " + path.string());
  }

  int channels = 0;
  int src_rate = 0;
  int bits = 0;
  int audio_format = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    uint32_t chunk_len = read_u32le(hdr + 4);
    pos += 8;
    if (pos + chunk_len > bytes.size()) fail(ErrorKind::Format, "truncated chunk in " + path.string());
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) fail(ErrorKind::Format, "short fmt chunk in " + path.string());
      audio_format = read_u16le(bytes.data() + pos);
      channels = read_u16le(bytes.data() + pos + 2);
      src_rate = static_cast<int>(read_u32le(bytes.data() + pos + 4));
      bits = read_u16le(bytes.data() + pos + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = chunk_len;
    }
    pos += chunk_len + (chunk_len & 1); // chunks are word-aligned
  }

  if (channels == 0 || src_rate == 0 || data == nullptr)
    fail(ErrorKind::Format, "missing fmt/data chunk in " + path.string());
  if (audio_format != 1 || bits != 16)
    fail(ErrorKind::Unsupported, "only PCM16 supported: " + path.string());
  if (channels > 2) fail(ErrorKind::Unsupported, "more than 2 channels: " + path.string());

  size_t frames = data_len / (2 * channels);
  std::vector<int16_t> mono(frames);
  for (size_t i = 0; i < frames; ++i) {
    const uint8_t* p = data + i * 2 * channels;
    int32_t v = static_cast<int16_t>(read_u16le(p));
    if (channels == 2) {
      int32_t r = static_cast<int16_t>(read_u16le(p + 2));
      v = (v + r) / 2;
    }
    mono[i] = static_cast<int16_t>(v);
  }

  AudioClip clip;
  clip.samples = resample_to_16k(mono, src_rate);
  clip.sample_rate = kSampleRate;
  return clip;
}

std::vector<int16_t> resample_to_16k(std::span<const int16_t> samples, int src_rate) {
  if (src_rate <= 0) fail(ErrorKind::Unsupported, "bad sample rate");
  if (src_rate == kSampleRate) return {samples.begin(), samples.end()};

  const double ratio = double(kSampleRate) / src_rate;
  const size_t n_out = static_cast<size_t>(round_half_away(samples.size() * ratio));
  // Cutoff at the lower Nyquist; wider kernel when decimating.
  const double scale = std::min(1.0, ratio);
  const double half_width = 24.0 / scale;

  std::vector<int16_t> out(n_out);
  for (size_t n = 0; n < n_out; ++n) {
    const double t = n / ratio; // center in input-sample units
    const long k0 = static_cast<long>(std::ceil(t - half_width));
    const long k1 = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long k = std::max(0l, k0); k <= std::min<long>(k1, long(samples.size()) - 1); ++k) {
      const double u = k - t;
      const double w = 0.5 + 0.5 * std::cos(kPi * u / half_width); // Hann taper
      acc += samples[size_t(k)] * scale * sinc(scale * u) * w;
    }
    out[n] = sat_i16(round_half_away(acc));
  }
  return out;
}

double mean_power(std::span<const int16_t> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (int16_t s : samples) acc += double(s) * s;
  return acc / double(samples.size());
}

AudioClip mix_at_snr(const AudioClip& clean, const NoiseRecording& noise, const MixSpec& spec) {
  const size_t len = clean.samples.size();
  const size_t offset = static_cast<size_t>(round_half_away(spec.noise_offset_s * kSampleRate));
  if (offset + len > noise.samples.size())
    fail(ErrorKind::Shape, "noise segment shorter than clip at requested offset");

  std::span<const int16_t> seg(noise.samples.data() + offset, len);
  const double p_clean = mean_power(clean.samples);
  const double p_noise = mean_power(seg);
  if (p_noise <= 0.0) fail(ErrorKind::DegenerateMix, "zero-power noise segment");

  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));

  AudioClip out;
  out.sample_rate = kSampleRate;
  out.label = clean.label;
  out.samples.resize(len);
  for (size_t i = 0; i < len; ++i) {
    out.samples[i] = sat_i16(clean.samples[i] + round_half_away(gain * seg[i]));
  }
  return out;
}

AudioClip fit_to_window(AudioClip clip) {
  clip.samples.resize(kClipSamples, 0);
  return clip;
}

namespace {

// One keyword utterance. Both families share the utterance texture (Hann
// envelope, syllabic amplitude modulation, a harmonic stack) that stationary
// noise lacks; class identity is the chirp direction through an overlapping
// band, so heavy noise blurs the classes without looking like one of them.
std::vector<int16_t> synth_keyword(Label label, SeededRng& rng) {
  std::vector<double> x(kClipSamples, 0.0);

  // mirrored trajectories over the same band: direction is the class cue
  const double f_lo = 800.0 * (1.0 + rng.uniform(-0.08, 0.08));
  const double f_hi = 2200.0 * (1.0 + rng.uniform(-0.08, 0.08));
  const double f0 = label == Label::Yes ? f_lo : f_hi;
  const double f1 = label == Label::Yes ? f_hi : f_lo;
  const double dur = rng.uniform(0.55, 0.80);
  const int n = static_cast<int>(dur * kSampleRate);
  const int start = static_cast<int>(rng.uniform(0.0, 0.18) * kSampleRate);
  const double amp = rng.uniform(5000.0, 9000.0);
  const double am_rate = rng.uniform(6.5, 9.5); // syllabic rhythm
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  double ph = phase, ph2 = 0.37 * phase;
  for (int i = 0; i < n && start + i < kClipSamples; ++i) {
    const double frac = double(i) / n;
    const double f = f0 + (f1 - f0) * frac;
    ph += 2.0 * kPi * f / kSampleRate;
    ph2 += 2.0 * kPi * 2.0 * f / kSampleRate;
    const double env = 0.5 - 0.5 * std::cos(2.0 * kPi * frac); // Hann
    const double am = 1.0 - 0.5 * (0.5 + 0.5 * std::cos(2.0 * kPi * am_rate * i / kSampleRate));
    x[size_t(start + i)] = env * am * amp * (std::sin(ph) + 0.35 * std::sin(ph2));
  }

  std::vector<int16_t> out(kClipSamples);
  for (int i = 0; i < kClipSamples; ++i) out[size_t(i)] = sat_i16(round_half_away(x[size_t(i)]));
  return out;
}

} // namespace

std::vector<AudioClip> synth_test_corpus(int n_per_class, uint64_t seed) {
  if (n_per_class < 1) fail(ErrorKind::Usage, "n_per_class must be >= 1");
  SeededRng rng(seed);
  std::vector<AudioClip> corpus;
  corpus.reserve(size_t(n_per_class) * 2);
  for (int i = 0; i < n_per_class; ++i) {
    for (Label label : {Label::Yes, Label::No}) {
      SeededRng clip_rng = rng.fork(uint64_t(i) * 2 + (label == Label::No ? 1 : 0));
      AudioClip clip;
      clip.samples = synth_keyword(label, clip_rng);
      clip.label = label;
      corpus.push_back(std::move(clip));
    }
  }
  return corpus;
}

SynthNoiseKind synth_noise_kind_from_name(const std::string& name) {
  if (name == "WHITE") return SynthNoiseKind::White;
  if (name == "PINK") return SynthNoiseKind::Pink;
  if (name == "BABBLE") return SynthNoiseKind::Babble;
  fail(ErrorKind::Usage, "unknown synthetic noise kind: " + name);
}

NoiseRecording synth_noise_recording(SynthNoiseKind kind, double seconds, uint64_t seed) {
  SeededRng rng(seed);
  const size_t n = static_cast<size_t>(seconds * kSampleRate);
  std::vector<double> x(n, 0.0);

  switch (kind) {
    case SynthNoiseKind::White: {
      for (size_t i = 0; i < n; ++i) x[i] = 2500.0 * rng.normal();
      break;
    }
    case SynthNoiseKind::Pink: {
      // Paul Kellet's economy pink filter over white gaussian input.
      double b0 = 0, b1 = 0, b2 = 0;
      for (size_t i = 0; i < n; ++i) {
        const double w = rng.normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        x[i] = 1400.0 * (b0 + b1 + b2 + w * 0.1848);
      }
      break;
    }
    case SynthNoiseKind::Babble: {
      // Eight wandering, randomly gated oscillators.
      constexpr int kVoices = 8;
      double freq[kVoices], ph[kVoices];
      int gate[kVoices];
      for (int v = 0; v < kVoices; ++v) {
        freq[v] = rng.uniform(200.0, 3200.0);
        ph[v] = rng.uniform(0.0, 2.0 * kPi);
        gate[v] = 0;
      }
      for (size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int v = 0; v < kVoices; ++v) {
          if (gate[v] <= 0) {
            // new burst: re-pitch and pick an on/off span
            freq[v] = std::clamp(freq[v] * (1.0 + 0.4 * rng.normal()), 150.0, 3600.0);
            gate[v] = 800 + int(rng.below(4000));
          }
          --gate[v];
          ph[v] += 2.0 * kPi * freq[v] / kSampleRate;
          if ((gate[v] / 400) % 2 == 0) s += std::sin(ph[v]);
        }
        x[i] = 900.0 * s;
      }
      break;
    }
  }

  NoiseRecording rec;
  rec.environment = kind == SynthNoiseKind::White  ? "WHITE"
                    : kind == SynthNoiseKind::Pink ? "PINK"
                                                   : "BABBLE";
  rec.samples.resize(n);
  for (size_t i = 0; i < n; ++i) rec.samples[i] = sat_i16(round_half_away(x[i]));
  return rec;
}

std::vector<std::filesystem::path> list_gscd_files(const std::filesystem::path& root,
                                                   Label label) {
  namespace fs = std::filesystem;
  const char* dir = label == Label::Yes ? "yes" : "no";
  const fs::path cls = root / dir;
  if (!fs::is_directory(cls)) fail(ErrorKind::Dataset, "missing class directory " + cls.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cls)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::Dataset, "no wav files under " + cls.string());
  return files;
}

std::vector<AudioClip> load_gscd_class(const std::filesystem::path& root, Label label,
                                       int limit) {
  std::vector<std::filesystem::path> files = list_gscd_files(root, label);
  if (limit > 0 && int(files.size()) > limit) files.resize(size_t(limit));

  std::vector<AudioClip> clips;
  clips.reserve(files.size());
  for (const auto& f : files) {
    AudioClip c = fit_to_window(load_wav(f));
    c.label = label;
    clips.push_back(std::move(c));
  }
  return clips;
}

NoiseRecording load_demand(const std::filesystem::path& root, const std::string& environment) {
  namespace fs = std::filesystem;
  const fs::path dir = root / environment;
  if (!fs::is_directory(dir)) fail(ErrorKind::Dataset, "missing environment directory " + dir.string());

  fs::path wav = dir / "ch01.wav";
  if (!fs::exists(wav)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorKind::Dataset, "no wav files under " + dir.string());
    wav = files.front();
  }

  AudioClip clip = load_wav(wav);
  NoiseRecording rec;
  rec.environment = environment;
  rec.samples = std::move(clip.samples);
  return rec;
}

double environment_noise_gain(std::span<const AudioClip> keyword_pool,
                              const NoiseRecording& noise, double snr_db) {
  if (keyword_pool.empty()) fail(ErrorKind::Usage, "empty keyword pool");
  double p_pool = 0.0;
  for (const AudioClip& c : keyword_pool) p_pool += mean_power(c.samples);
  p_pool /= double(keyword_pool.size());
  const double p_noise = mean_power(noise.samples);
  if (p_noise <= 0.0) fail(ErrorKind::DegenerateMix, "zero-power noise recording");
  return std::sqrt(p_pool / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

AudioClip noise_segment_at_gain(const NoiseRecording& noise, size_t offset, double gain) {
  if (offset + size_t(kClipSamples) > noise.samples.size())
    fail(ErrorKind::Shape, "noise segment out of range");
  AudioClip seg;
  seg.label = Label::NoiseOnly;
  seg.samples.resize(size_t(kClipSamples));
  for (int i = 0; i < kClipSamples; ++i) {
    seg.samples[size_t(i)] = sat_i16(round_half_away(gain * noise.samples[offset + size_t(i)]));
  }
  return seg;
}

std::vector<AudioClip> build_stream_interval(std::span<const AudioClip> keyword_pool,
                                             const NoiseRecording& noise,
                                             const StreamSpec& spec, int interval_index) {
  if (spec.interval < spec.yes_per_interval + spec.no_per_interval)
    fail(ErrorKind::Usage, "interval shorter than keyword counts");
  if (noise.samples.size() < size_t(kClipSamples))
    fail(ErrorKind::Usage, "noise recording shorter than one clip");

  std::vector<const AudioClip*> yes_pool, no_pool;
  for (const AudioClip& c : keyword_pool) {
    if (c.label == Label::Yes) yes_pool.push_back(&c);
    if (c.label == Label::No) no_pool.push_back(&c);
  }
  if (yes_pool.empty() || no_pool.empty())
    fail(ErrorKind::Usage, "keyword pool must contain both classes");

  SeededRng rng = SeededRng(spec.seed).fork(uint64_t(interval_index));
  const uint32_t max_offset = uint32_t(noise.samples.size() - size_t(kClipSamples));
  const double env_gain = environment_noise_gain(keyword_pool, noise, spec.snr_db);

  std::vector<AudioClip> block;
  block.reserve(size_t(spec.interval));
  for (int i = 0; i < spec.yes_per_interval + spec.no_per_interval; ++i) {
    const bool yes = i < spec.yes_per_interval;
    const auto& pool = yes ? yes_pool : no_pool;
    const AudioClip& clean = *pool[rng.below(uint32_t(pool.size()))];
    MixSpec mix;
    mix.snr_db = spec.snr_db;
    mix.noise_offset_s = double(rng.below(max_offset + 1)) / kSampleRate;
    mix.seed = spec.seed;
    block.push_back(mix_at_snr(clean, noise, mix));
  }
  for (int i = spec.yes_per_interval + spec.no_per_interval; i < spec.interval; ++i) {
    block.push_back(noise_segment_at_gain(noise, rng.below(max_offset + 1), env_gain));
  }
  rng.shuffle(block);
  return block;
}

std::vector<AudioClip> build_stream(std::span<const AudioClip> keyword_pool,
                                    const NoiseRecording& noise, const StreamSpec& spec) {
  std::vector<AudioClip> stream;
  stream.reserve(size_t(spec.interval) * spec.intervals);
  for (int iv = 0; iv < spec.intervals; ++iv) {
    for (AudioClip& c : build_stream_interval(keyword_pool, noise, spec, iv)) {
      stream.push_back(std::move(c));
    }
  }
  return stream;
}

} // namespace kws
