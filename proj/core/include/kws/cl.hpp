// Continual-learning engine: effective-sample determination, feature-domain
// rehearsal augmentation, periodic retraining with re-quantization and
// artifact refresh, and the deployment loop tying them together.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "kws/quant.hpp"
#include "kws/spectral.hpp"
#include "kws/wavelet.hpp"

namespace kws {

struct CLConfig {
  int confidence_threshold_q = 217; // 85% on the 0..255 grid
  double n_sigma = 2.0;
  int interval = 1024;          // inputs between retraining events
  int rehearsal_per_class = 64;
  int epochs_per_update = 5;
  float alpha = 0.5f;           // spectral-denoise attenuation
  int effective_capacity = 256; // oldest-first eviction beyond this
  float learning_rate = 0.001f;
  int batch_size = 16;
  uint64_t seed = 0;
  bool retrain = true;     // periodic updates on/off (component ablation)
  bool use_wavelet = true; // first-stage denoising on/off (component ablation)
};

struct EffectiveSample {
  FeaturePair pair; // denoised
  Label pseudo_label = Label::Yes;
  int confidence_q = 0;
  double distance = 0.0; // MAE to the predicted class prototype
};

// Labeled clean-training features (pre spectral denoising, so they can be
// remixed with environment noise). Entries are never mutated.
struct RehearsalBuffer {
  std::vector<FeaturePair> entries;
  int capacity_per_class = 64;
};

RehearsalBuffer make_rehearsal_buffer(std::span<const FeaturePair> clean_features,
                                      int per_class);

enum class FilterDecision { Accepted, RejectedLowConfidence, RejectedFarFromPrototype };

struct FilterStats {
  uint64_t inferences = 0;
  uint64_t distance_evals = 0;
};

struct FilterOutcome {
  FilterDecision decision = FilterDecision::RejectedLowConfidence;
  Label predicted = Label::No;
  int confidence_q = 0;
  double distance = std::nan(""); // computed only past the confidence gate
};

// Decision core, confidence gate first: below threshold the distance is
// never computed. Exposed separately so it can be checked against an
// independent oracle.
FilterOutcome filter_decide(Label predicted, int confidence_q, std::span<const float> latent,
                            const ArtifactSet& artifacts, const CLConfig& cfg,
                            FilterStats* stats = nullptr);

struct FilterResult {
  FilterOutcome outcome;
  QuantInference inference;
};

FilterResult filter_effective(const QuantizedModel& qm, const ArtifactSet& artifacts,
                              const FeaturePair& denoised, const CLConfig& cfg,
                              FilterStats* stats = nullptr);

// Mel-power-domain mix: logmel_aug = log(exp(clean) + exp(noise)), MFCC
// recomputed as the DCT of the mixed LogMel. No spectral denoising here.
FeaturePair mix_features_mel_power(const FeaturePair& clean, const FeatureMap& noise_logmel);

// One augmented pair per rehearsal entry; the noise clip bypasses wavelet
// denoising and the result receives spectral denoising only.
std::vector<FeaturePair> augment_rehearsal(const RehearsalBuffer& buffer,
                                           const AudioClip& noise_clip,
                                           const DenoiseConfig& denoise);

// Runtime input pipeline: wavelet (optional) -> features -> spectral.
FeaturePair runtime_features(const AudioClip& clip, const CLConfig& cfg);
// Training-side features without the spectral stage (rehearsal contents).
FeaturePair clean_features(const AudioClip& clip, bool use_wavelet);

struct CLState {
  DualKwsModel model;
  QuantizedModel qm;
  ArtifactSet artifacts;
  RehearsalBuffer rehearsal;
  std::vector<EffectiveSample> effective;
  uint64_t update_count = 0;
  uint64_t seed = 0;
};

// One retraining event: mini-batch = rehearsal + augmented rehearsal +
// pseudo-labeled effective samples; retrain from DQ(qm); recalibrate and
// requantize; recompute artifacts from the mini-batch latents under the new
// quantized model; clear the effective buffer.
void continual_update(CLState& state, std::span<const EffectiveSample> effective,
                      const AudioClip& noise_clip, const CLConfig& cfg);

struct IntervalMetrics {
  int interval_index = 0;
  double accuracy = 0.0; // labeled keyword items only
  int n_items = 0;
  int n_labeled = 0;
  int n_correct = 0;
  int n_accepted = 0;
  int n_rejected_conf = 0;
  int n_rejected_dist = 0;
  double mean_confidence = 0.0; // confidence_q / 255 over all items
};

using NoiseProvider = std::function<AudioClip(uint64_t update_index)>;
using ClipSource = std::function<AudioClip(size_t idx)>;

// Per input: denoise -> features -> filter (accepts stored); every
// cfg.interval inputs a continual update (when retraining is enabled).
// on_update, when set, runs after every update (snapshot persistence).
// The ClipSource form keeps long streams lazy (one interval in memory).
std::vector<IntervalMetrics> run_deployment(CLState& state, size_t n_inputs,
                                            const ClipSource& source, const CLConfig& cfg,
                                            const NoiseProvider& noise,
                                            const std::function<void(const CLState&)>& on_update = {});
std::vector<IntervalMetrics> run_deployment(CLState& state, std::span<const AudioClip> stream,
                                            const CLConfig& cfg, const NoiseProvider& noise,
                                            const std::function<void(const CLState&)>& on_update = {});

// Versioned snapshot directory: float + quantized checkpoints, buffers, meta.
void save_state(const std::filesystem::path& dir, const CLState& state);
CLState load_state(const std::filesystem::path& dir);

void save_feature_pairs(const std::filesystem::path& path, std::span<const FeaturePair> pairs);
std::vector<FeaturePair> load_feature_pairs(const std::filesystem::path& path);

} // namespace kws
