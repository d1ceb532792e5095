#include "kws/spectral.hpp"

#include <algorithm>

namespace kws {

namespace {

std::array<double, kFeatureCols> column_means(const FeatureMap& m) {
  std::array<double, kFeatureCols> mu{};
  for (int c = 0; c < kFeatureCols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < kNumBands; ++r) acc += m.at(r, c);
    mu[size_t(c)] = acc / kNumBands;
  }
  return mu;
}

std::array<double, kNumBands> row_means(const FeatureMap& m) {
  std::array<double, kNumBands> mu{};
  for (int r = 0; r < kNumBands; ++r) {
    double acc = 0.0;
    for (int c = 0; c < kFeatureCols; ++c) acc += m.at(r, c);
    mu[size_t(r)] = acc / kFeatureCols;
  }
  return mu;
}

} // namespace

FeatureMap normalize01(const FeatureMap& map) {
  const auto [lo_it, hi_it] = std::minmax_element(map.v.begin(), map.v.end());
  const float lo = *lo_it, hi = *hi_it;
  FeatureMap out;
  out.kind = map.kind;
  if (hi == lo) {
    out.v.fill(0.0f);
    return out;
  }
  const float range = hi - lo;
  // divide, not multiply-by-reciprocal: keeps min/max exactly 0 and 1
  for (size_t i = 0; i < map.v.size(); ++i) out.v[i] = (map.v[i] - lo) / range;
  return out;
}

MeanSubtracted mean_subtract(const FeatureMap& normalized) {
  MeanSubtracted out;
  out.temporal.kind = normalized.kind;
  out.spectral.kind = normalized.kind;
  const auto col_mu = column_means(normalized);
  const auto row_mu = row_means(normalized);
  for (int r = 0; r < kNumBands; ++r) {
    for (int c = 0; c < kFeatureCols; ++c) {
      out.temporal.at(r, c) = float(normalized.at(r, c) - col_mu[size_t(c)]);
      out.spectral.at(r, c) = float(normalized.at(r, c) - row_mu[size_t(r)]);
    }
  }
  return out;
}

MaskPair build_masks(const FeatureMap& x_t, const FeatureMap& x_s) {
  MaskPair masks;
  const auto col_mu = column_means(x_t);
  const auto row_mu = row_means(x_s);
  for (int r = 0; r < kNumBands; ++r) {
    for (int c = 0; c < kFeatureCols; ++c) {
      const size_t i = size_t(r * kFeatureCols + c);
      masks.temporal[i] = x_t.at(r, c) > col_mu[size_t(c)] ? 1 : 0;
      masks.spectral[i] = x_s.at(r, c) > row_mu[size_t(r)] ? 1 : 0;
    }
  }
  return masks;
}

FeatureMap recombine(const FeatureMap& x_n, const FeatureMap& x_t, const FeatureMap& x_s,
                     const MaskPair& masks, const DenoiseConfig& cfg) {
  const float a = cfg.alpha;
  FeatureMap out;
  out.kind = x_n.kind;
  for (size_t i = 0; i < out.v.size(); ++i) {
    const float ms = masks.spectral[i] ? x_s.v[i] : 0.0f;
    const float mt = masks.temporal[i] ? x_t.v[i] : 0.0f;
    out.v[i] = (1.0f - a) * (a * ms + (1.0f - a) * mt) + a * x_n.v[i];
  }
  return out;
}

FeatureMap denoise_map(const FeatureMap& map, const DenoiseConfig& cfg) {
  const FeatureMap x_n = normalize01(map);
  const MeanSubtracted ms = mean_subtract(x_n);
  const MaskPair masks = build_masks(ms.temporal, ms.spectral);
  return recombine(x_n, ms.temporal, ms.spectral, masks, cfg);
}

FeaturePair denoise_pair(const FeaturePair& pair, const DenoiseConfig& cfg) {
  FeaturePair out;
  out.label = pair.label;
  out.provenance = pair.provenance;
  out.mfcc = denoise_map(pair.mfcc, cfg);
  out.logmel = denoise_map(pair.logmel, cfg);
  return out;
}

} // namespace kws
