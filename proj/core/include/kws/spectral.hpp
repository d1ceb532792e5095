// Second-stage denoising on feature maps: [0,1] normalization, temporal and
// spectral mean subtraction, binary masks, alpha-weighted recombination.
#pragma once

#include <array>
#include <cstdint>

#include "kws/features.hpp"

namespace kws {

struct DenoiseConfig {
  float alpha = 0.5f; // attenuation parameter, in [0, 1]
};

struct MaskPair {
  std::array<uint8_t, kFeatureSize> temporal{}; // M_t
  std::array<uint8_t, kFeatureSize> spectral{}; // M_s
};

// (x - min) / (max - min); constant maps normalize to all zeros.
FeatureMap normalize01(const FeatureMap& map);

struct MeanSubtracted {
  FeatureMap temporal; // x_t: per-frame (column) means removed
  FeatureMap spectral; // x_s: per-band (row) means removed
};

MeanSubtracted mean_subtract(const FeatureMap& normalized);

// M_t = 1[x_t > per-frame mean of x_t]; M_s = 1[x_s > per-band mean of x_s].
// Strict inequality; ties map to 0.
MaskPair build_masks(const FeatureMap& x_t, const FeatureMap& x_s);

// x_d = (1 - a) * (a * x_s * M_s + (1 - a) * x_t * M_t) + a * x_n
FeatureMap recombine(const FeatureMap& x_n, const FeatureMap& x_t, const FeatureMap& x_s,
                     const MaskPair& masks, const DenoiseConfig& cfg);

FeatureMap denoise_map(const FeatureMap& map, const DenoiseConfig& cfg);

// Full chain applied independently to both maps; label/provenance preserved.
FeaturePair denoise_pair(const FeaturePair& pair, const DenoiseConfig& cfg);

} // namespace kws
