#include "kws/cl.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "binio.hpp"

namespace kws {

namespace {

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

AudioClip8 to_8bit(const AudioClip& clip, bool use_wavelet) {
  return use_wavelet ? denoise_clip(clip) : quantize_to_8bit(clip);
}

} // namespace

RehearsalBuffer make_rehearsal_buffer(std::span<const FeaturePair> clean_features,
                                      int per_class) {
  RehearsalBuffer buf;
  buf.capacity_per_class = per_class;
  int n_yes = 0, n_no = 0;
  for (const FeaturePair& p : clean_features) {
    if (!p.label) continue;
    if (*p.label == Label::Yes && n_yes < per_class) {
      buf.entries.push_back(p);
      buf.entries.back().provenance = Provenance::Rehearsal;
      ++n_yes;
    } else if (*p.label == Label::No && n_no < per_class) {
      buf.entries.push_back(p);
      buf.entries.back().provenance = Provenance::Rehearsal;
      ++n_no;
    }
  }
  if (n_yes < per_class || n_no < per_class)
    fail(ErrorKind::InsufficientData, "not enough clean features to fill the rehearsal buffer");
  return buf;
}

FilterOutcome filter_decide(Label predicted, int confidence_q, std::span<const float> latent,
                            const ArtifactSet& artifacts, const CLConfig& cfg,
                            FilterStats* stats) {
  FilterOutcome out;
  out.predicted = predicted;
  out.confidence_q = confidence_q;
  if (confidence_q < cfg.confidence_threshold_q) {
    out.decision = FilterDecision::RejectedLowConfidence;
    return out; // distance intentionally not computed
  }
  const ClassArtifacts& cls = artifacts.of(predicted);
  if (stats) ++stats->distance_evals;
  out.distance = mae_distance(latent, cls.prototype);
  out.decision = out.distance <= cls.threshold ? FilterDecision::Accepted
                                               : FilterDecision::RejectedFarFromPrototype;
  return out;
}

FilterResult filter_effective(const QuantizedModel& qm, const ArtifactSet& artifacts,
                              const FeaturePair& denoised, const CLConfig& cfg,
                              FilterStats* stats) {
  FilterResult r;
  r.inference = quantized_inference(qm, denoised);
  if (stats) ++stats->inferences;
  if (r.inference.confidence_q < cfg.confidence_threshold_q) {
    // cheap gate first: skip the latent dequantization and distance entirely
    r.outcome.decision = FilterDecision::RejectedLowConfidence;
    r.outcome.predicted = r.inference.predicted;
    r.outcome.confidence_q = r.inference.confidence_q;
    return r;
  }
  const std::vector<float> latent = dequantize_latent(qm, r.inference.latent_q);
  r.outcome = filter_decide(r.inference.predicted, r.inference.confidence_q, latent, artifacts,
                            cfg, stats);
  return r;
}

FeaturePair mix_features_mel_power(const FeaturePair& clean, const FeatureMap& noise_logmel) {
  FeaturePair out;
  out.label = clean.label;
  out.provenance = Provenance::Augmented;
  for (int i = 0; i < kFeatureSize; ++i) {
    out.logmel.v[size_t(i)] =
        float(log_add_exp(double(clean.logmel.v[size_t(i)]), double(noise_logmel.v[size_t(i)])));
  }
  for (int c = 0; c < kFeatureCols; ++c) {
    std::array<float, kNumBands> col;
    for (int r = 0; r < kNumBands; ++r) col[size_t(r)] = out.logmel.at(r, c);
    const auto mf = mfcc_frame(col);
    for (int r = 0; r < kNumBands; ++r) out.mfcc.at(r, c) = mf[size_t(r)];
  }
  return out;
}

std::vector<FeaturePair> augment_rehearsal(const RehearsalBuffer& buffer,
                                           const AudioClip& noise_clip,
                                           const DenoiseConfig& denoise) {
  const FeaturePair noise_feats = extract_pair(quantize_to_8bit(fit_to_window(noise_clip)));
  std::vector<FeaturePair> out;
  out.reserve(buffer.entries.size());
  for (const FeaturePair& entry : buffer.entries) {
    FeaturePair mixed = mix_features_mel_power(entry, noise_feats.logmel);
    out.push_back(denoise_pair(mixed, denoise));
    out.back().provenance = Provenance::Augmented;
  }
  return out;
}

FeaturePair runtime_features(const AudioClip& clip, const CLConfig& cfg) {
  const FeaturePair raw = extract_pair(to_8bit(clip, cfg.use_wavelet));
  return denoise_pair(raw, DenoiseConfig{cfg.alpha});
}

FeaturePair clean_features(const AudioClip& clip, bool use_wavelet) {
  FeaturePair p = extract_pair(to_8bit(clip, use_wavelet));
  p.provenance = Provenance::Rehearsal;
  return p;
}

void continual_update(CLState& state, std::span<const EffectiveSample> effective,
                      const AudioClip& noise_clip, const CLConfig& cfg) {
  if (state.rehearsal.entries.empty())
    fail(ErrorKind::State, "refusing update with an empty rehearsal buffer");

  const DenoiseConfig denoise{cfg.alpha};
  std::vector<FeaturePair> batch;
  batch.reserve(state.rehearsal.entries.size() * 2 + effective.size());
  for (const FeaturePair& entry : state.rehearsal.entries) {
    batch.push_back(denoise_pair(entry, denoise));
    batch.back().provenance = Provenance::Rehearsal;
  }
  for (FeaturePair& aug : augment_rehearsal(state.rehearsal, noise_clip, denoise)) {
    batch.push_back(std::move(aug));
  }
  const size_t n_labeled = batch.size(); // rehearsal + augmented, trusted labels
  for (const EffectiveSample& es : effective) {
    batch.push_back(es.pair);
    batch.back().label = es.pseudo_label; // pseudo-labels as hard targets
    batch.back().provenance = Provenance::Runtime;
  }

  DualKwsModel retrained = dequantize_dual(state.qm);
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs_per_update;
  tc.batch_size = cfg.batch_size;
  tc.seed = SeededRng(state.seed).fork(state.update_count).seed();
  train(retrained, batch, tc);

  const CalibrationResult calib = calibrate(retrained, batch);
  QuantizedModel qm = quantize_model(retrained, calib);

  // Artifacts come from the rehearsal + augmented portion only: thresholds
  // track trusted labels, so pseudo-labeled accepts cannot widen their own
  // acceptance radius on the next interval.
  std::vector<LabeledLatent> latents;
  latents.reserve(n_labeled);
  for (size_t i = 0; i < n_labeled; ++i) {
    const QuantInference qi = quantized_inference(qm, batch[i]);
    latents.push_back({dequantize_latent(qm, qi.latent_q), *batch[i].label});
  }
  ArtifactSet artifacts = compute_artifacts(latents, cfg.n_sigma);

  state.model = std::move(retrained);
  state.qm = std::move(qm);
  state.artifacts = std::move(artifacts);
  state.effective.clear();
  ++state.update_count;
}

std::vector<IntervalMetrics> run_deployment(CLState& state, size_t n_inputs,
                                            const ClipSource& source, const CLConfig& cfg,
                                            const NoiseProvider& noise,
                                            const std::function<void(const CLState&)>& on_update) {
  std::vector<IntervalMetrics> rows;
  IntervalMetrics cur;
  cur.interval_index = 0;
  double conf_sum = 0.0;
  FilterStats stats;

  for (size_t idx = 0; idx < n_inputs; ++idx) {
    const AudioClip clip = source(idx);
    const FeaturePair pair = runtime_features(clip, cfg);
    const FilterResult fr = filter_effective(state.qm, state.artifacts, pair, cfg, &stats);

    ++cur.n_items;
    conf_sum += fr.outcome.confidence_q / 255.0;
    if (clip.label && *clip.label != Label::NoiseOnly) {
      ++cur.n_labeled;
      if (fr.inference.predicted == *clip.label) ++cur.n_correct;
    }
    switch (fr.outcome.decision) {
      case FilterDecision::Accepted: {
        ++cur.n_accepted;
        EffectiveSample es;
        es.pair = pair;
        es.pseudo_label = fr.outcome.predicted;
        es.confidence_q = fr.outcome.confidence_q;
        es.distance = fr.outcome.distance;
        state.effective.push_back(std::move(es));
        if (int(state.effective.size()) > cfg.effective_capacity) {
          state.effective.erase(state.effective.begin()); // oldest first
        }
        break;
      }
      case FilterDecision::RejectedLowConfidence: ++cur.n_rejected_conf; break;
      case FilterDecision::RejectedFarFromPrototype: ++cur.n_rejected_dist; break;
    }

    if (cur.n_items == cfg.interval || idx + 1 == n_inputs) {
      cur.accuracy = cur.n_labeled > 0 ? double(cur.n_correct) / cur.n_labeled : 0.0;
      cur.mean_confidence = cur.n_items > 0 ? conf_sum / cur.n_items : 0.0;
      rows.push_back(cur);
      if (cur.n_items == cfg.interval && cfg.retrain) {
        continual_update(state, state.effective, noise(state.update_count), cfg);
        if (on_update) on_update(state);
      }
      cur = IntervalMetrics{};
      cur.interval_index = int(rows.size());
      conf_sum = 0.0;
    }
  }
  return rows;
}

std::vector<IntervalMetrics> run_deployment(CLState& state, std::span<const AudioClip> stream,
                                            const CLConfig& cfg, const NoiseProvider& noise,
                                            const std::function<void(const CLState&)>& on_update) {
  return run_deployment(
      state, stream.size(), [&stream](size_t i) { return stream[i]; }, cfg, noise, on_update);
}

void save_feature_pairs(const std::filesystem::path& path, std::span<const FeaturePair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out.write("KWSFEAT1", 8);
  binio::write_u32(out, 1);
  binio::write_u32(out, uint32_t(pairs.size()));
  for (const FeaturePair& p : pairs) write_feature_pair(out, p);
  if (!out) fail(ErrorKind::State, "write failed: " + path.string());
}

std::vector<FeaturePair> load_feature_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "KWSFEAT1", 8) != 0)
    fail(ErrorKind::Format, "not a feature file: " + path.string());
  if (binio::read_u32(in) != 1) fail(ErrorKind::Format, "unsupported feature file version");
  const uint32_t n = binio::read_u32(in);
  std::vector<FeaturePair> pairs;
  pairs.reserve(n);
  for (uint32_t i = 0; i < n; ++i) pairs.push_back(read_feature_pair(in));
  return pairs;
}

namespace {

void save_effective(const std::filesystem::path& path,
                    std::span<const EffectiveSample> effective) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out.write("KWSEFF01", 8);
  binio::write_u32(out, 1);
  binio::write_u32(out, uint32_t(effective.size()));
  for (const EffectiveSample& es : effective) {
    write_feature_pair(out, es.pair);
    binio::write_u8(out, uint8_t(es.pseudo_label));
    binio::write_u16(out, uint16_t(es.confidence_q));
    binio::write_f64(out, es.distance);
  }
}

std::vector<EffectiveSample> load_effective(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "KWSEFF01", 8) != 0)
    fail(ErrorKind::Format, "not an effective-sample file: " + path.string());
  if (binio::read_u32(in) != 1) fail(ErrorKind::Format, "unsupported effective file version");
  const uint32_t n = binio::read_u32(in);
  std::vector<EffectiveSample> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    EffectiveSample es;
    es.pair = read_feature_pair(in);
    es.pseudo_label = Label(binio::read_u8(in));
    es.confidence_q = binio::read_u16(in);
    es.distance = binio::read_f64(in);
    out.push_back(std::move(es));
  }
  return out;
}

std::map<std::string, std::string> read_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

} // namespace

void save_state(const std::filesystem::path& dir, const CLState& state) {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", state.model);
  save_quantized_checkpoint(dir / "model.qckpt", state.qm, &state.artifacts);
  save_feature_pairs(dir / "rehearsal.bin", state.rehearsal.entries);
  save_effective(dir / "effective.bin", state.effective);
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  meta << "version=1\n";
  meta << "update_count=" << state.update_count << "\n";
  meta << "seed=" << state.seed << "\n";
  meta << "rehearsal_per_class=" << state.rehearsal.capacity_per_class << "\n";
  if (!meta) fail(ErrorKind::State, "write failed: " + (dir / "meta.txt").string());
}

CLState load_state(const std::filesystem::path& dir) {
  CLState state;
  const auto meta = read_meta(dir / "meta.txt");
  if (!meta.count("version") || meta.at("version") != "1")
    fail(ErrorKind::State, "unsupported snapshot version in " + dir.string());
  state.model = load_dual_checkpoint(dir / "model.ckpt");
  QuantizedCheckpoint q = load_quantized_checkpoint(dir / "model.qckpt");
  if (!q.artifacts) fail(ErrorKind::State, "snapshot missing class artifacts");
  state.qm = std::move(q.model);
  state.artifacts = std::move(*q.artifacts);
  state.rehearsal.entries = load_feature_pairs(dir / "rehearsal.bin");
  state.rehearsal.capacity_per_class =
      meta.count("rehearsal_per_class") ? std::stoi(meta.at("rehearsal_per_class")) : 64;
  state.effective = load_effective(dir / "effective.bin");
  state.update_count = meta.count("update_count") ? std::stoull(meta.at("update_count")) : 0;
  state.seed = meta.count("seed") ? std::stoull(meta.at("seed")) : 0;
  return state;
}

} // namespace kws
