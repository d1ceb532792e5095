// INT8 model quantization (Q), dequantization for retraining (DQ), and the
// fully integer inference path producing integer confidence and the INT8
// latent vector used for prototypes.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/model.hpp"
#include "kws/prototypes.hpp"

namespace kws {

// x ~= scale * (q - zero_point)
struct QuantParams {
  double scale = 1.0;
  int32_t zero_point = 0;
};

// Affine params from an observed range; degenerate ranges are anchored at
// zero and the scale floored at 1e-6.
QuantParams affine_params_from_range(double min_v, double max_v);

struct PathSites {
  QuantParams input, conv1, conv2;
};

struct CalibrationResult {
  std::vector<PathSites> paths; // dual: {mfcc, logmel}; single: {mfcc}
  QuantParams latent;           // shared concatenation site (= conv3 outputs)
};

// Per-site min/max over the batch. Needs >= 16 samples.
CalibrationResult calibrate(const DualKwsModel& model, std::span<const FeaturePair> batch);
CalibrationResult calibrate(const SingleKwsModel& model, std::span<const FeaturePair> batch);

// y = round_half_away(x * mult * 2^-shift); precomputed from a positive real.
struct FixedPointMult {
  int32_t mult = 0;
  int shift = 0;
};

FixedPointMult quantize_multiplier(double m);
int32_t fixed_point_mul(int32_t x, FixedPointMult m);

struct QConv {
  int in_c = 1, out_c = 1;
  std::vector<int8_t> w; // [out_c, in_c, 5, 5]
  double w_scale = 1.0;  // symmetric, zero_point 0
  std::vector<int32_t> bias; // scale = in.scale * w_scale
  QuantParams in_site, out_site;
  FixedPointMult requant; // in.scale * w_scale / out.scale
};

struct QDense {
  int in = 0;
  std::vector<int8_t> w;
  double w_scale = 1.0;
  int32_t bias = 0;
  QuantParams in_site;
  FixedPointMult requant; // to the logit grid (scale 1/256, zero_point 0)
};

struct QPath {
  QConv c1, c2, c3;
};

// Fixed sigmoid output grid: p = (q + 128) / 256.
inline constexpr double kProbScale = 1.0 / 256.0;
inline constexpr int32_t kProbZeroPoint = -128;
// Logit grid for the sigmoid lookup: z = q / 256, clamped to [-2048, 2047].
inline constexpr int kSigmoidLutSize = 4096;

struct QuantizedModel {
  std::string arch; // kDualArchTag / kSingleArchTag
  std::vector<QPath> paths;
  QDense head;
  QuantParams latent_site;
  std::array<int8_t, kSigmoidLutSize> sigmoid_lut{};

  int latent_len() const { return int(paths.size()) * kPathLatent; }
};

QuantizedModel quantize_model(const DualKwsModel& model, const CalibrationResult& calib);
QuantizedModel quantize_model(const SingleKwsModel& model, const CalibrationResult& calib);

DualKwsModel dequantize_dual(const QuantizedModel& qm);
SingleKwsModel dequantize_single(const QuantizedModel& qm);

struct QuantInference {
  Label predicted = Label::No;
  int confidence_q = 0;          // max(p, 1-p) in units of 1/256, saturated at 255
  int8_t prob_q = 0;             // on the fixed output grid
  std::vector<int8_t> latent_q;  // concatenation-site activations
};

// Integer conv/dense with 32-bit accumulators and fixed-point requantization;
// after input quantization no floating-point value influences the outputs.
QuantInference quantized_inference(const QuantizedModel& qm, const FeaturePair& pair);

inline double prob_of(int8_t prob_q) { return (int(prob_q) + 128) / 256.0; }

std::vector<float> dequantize_latent(const QuantizedModel& qm, std::span<const int8_t> latent_q);

// 0.85 -> 217 on the 0..255 confidence grid.
int confidence_threshold_from_prob(double p);

void save_quantized_checkpoint(const std::filesystem::path& path, const QuantizedModel& qm,
                               const ArtifactSet* artifacts);

struct QuantizedCheckpoint {
  QuantizedModel model;
  std::optional<ArtifactSet> artifacts;
};

QuantizedCheckpoint load_quantized_checkpoint(const std::filesystem::path& path);

} // namespace kws
