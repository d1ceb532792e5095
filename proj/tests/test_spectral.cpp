#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "kws/spectral.hpp"

using namespace kws;

namespace {

FeatureMap random_map(uint64_t seed, float lo = -5.0f, float hi = 15.0f) {
  SeededRng rng(seed);
  FeatureMap m;
  for (float& v : m.v) v = float(rng.uniform(lo, hi));
  return m;
}

FeatureMap constant_map(float c) {
  FeatureMap m;
  m.v.fill(c);
  return m;
}

} // namespace

TEST_CASE("normalize01: affine mapping and range contract") {
  FeatureMap m = constant_map(2.0f);
  m.v[0] = 2.0f;
  m.v[1] = 10.0f;
  m.v[2] = 6.0f;
  const FeatureMap n = normalize01(m);
  CHECK(n.v[0] == 0.0f);
  CHECK(n.v[1] == 1.0f);
  CHECK(n.v[2] == 0.5f);

  const FeatureMap r = normalize01(random_map(1));
  float lo = 2.0f, hi = -2.0f;
  for (float v : r.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);

  // idempotent on already-normalized maps
  const FeatureMap rr = normalize01(r);
  CHECK(rr.v == r.v);
}

TEST_CASE("normalize01: constant map goes to all zeros") {
  const FeatureMap n = normalize01(constant_map(7.5f));
  for (float v : n.v) CHECK(v == 0.0f);
}

TEST_CASE("mean_subtract: constant map centers to zero") {
  const auto ms = mean_subtract(normalize01(constant_map(3.0f)));
  for (float v : ms.temporal.v) CHECK(v == 0.0f);
  for (float v : ms.spectral.v) CHECK(v == 0.0f);
}

TEST_CASE("mean_subtract: a hot column is removed per frame") {
  FeatureMap m = constant_map(0.0f);
  for (int r = 0; r < kNumBands; ++r) m.at(r, 5) = 1.0f;
  const auto ms = mean_subtract(m);
  for (int r = 0; r < kNumBands; ++r) {
    CHECK(ms.temporal.at(r, 5) == 0.0f);
    CHECK(ms.temporal.at(r, 3) == 0.0f);
  }
  // spectral side: row means are 1/16
  CHECK(ms.spectral.at(0, 5) == doctest::Approx(1.0 - 1.0 / 16.0).epsilon(1e-6));
  CHECK(ms.spectral.at(0, 3) == doctest::Approx(-1.0 / 16.0).epsilon(1e-6));
}

TEST_CASE("mean_subtract: centering identities") {
  const auto ms = mean_subtract(normalize01(random_map(2)));
  for (int c = 0; c < kFeatureCols; ++c) {
    double col_sum = 0.0;
    for (int r = 0; r < kNumBands; ++r) col_sum += ms.temporal.at(r, c);
    CHECK(std::abs(col_sum) < 1e-6);
  }
  for (int r = 0; r < kNumBands; ++r) {
    double row_sum = 0.0;
    for (int c = 0; c < kFeatureCols; ++c) row_sum += ms.spectral.at(r, c);
    CHECK(std::abs(row_sum) < 1e-6);
  }
}

TEST_CASE("build_masks: all-zero input gives all-zero masks (strict >)") {
  const FeatureMap z = constant_map(0.0f);
  const MaskPair masks = build_masks(z, z);
  for (uint8_t v : masks.temporal) CHECK(v == 0);
  for (uint8_t v : masks.spectral) CHECK(v == 0);
}

TEST_CASE("build_masks: indicator against the per-frame mean") {
  FeatureMap x_t = constant_map(0.0f);
  // frame 0 alternates -1, 3: mean of the column is 1
  for (int r = 0; r < kNumBands; ++r) x_t.at(r, 0) = r % 2 == 0 ? -1.0f : 3.0f;
  const MaskPair masks = build_masks(x_t, constant_map(0.0f));
  for (int r = 0; r < kNumBands; ++r) {
    CHECK(int(masks.temporal[size_t(r * kFeatureCols)]) == (r % 2 == 0 ? 0 : 1));
  }
}

TEST_CASE("build_masks: invariant to per-frame/per-band constants") {
  const auto ms = mean_subtract(normalize01(random_map(3)));
  const MaskPair base = build_masks(ms.temporal, ms.spectral);

  FeatureMap shifted_t = ms.temporal;
  FeatureMap shifted_s = ms.spectral;
  SeededRng rng(4);
  for (int c = 0; c < kFeatureCols; ++c) {
    const float k = float(rng.uniform(-2.0, 2.0));
    for (int r = 0; r < kNumBands; ++r) shifted_t.at(r, c) += k;
  }
  for (int r = 0; r < kNumBands; ++r) {
    const float k = float(rng.uniform(-2.0, 2.0));
    for (int c = 0; c < kFeatureCols; ++c) shifted_s.at(r, c) += k;
  }
  const MaskPair shifted = build_masks(shifted_t, shifted_s);
  CHECK(shifted.temporal == base.temporal);
  CHECK(shifted.spectral == base.spectral);
}

TEST_CASE("recombine: alpha = 1 is the exact identity") {
  const FeatureMap x_n = normalize01(random_map(5));
  const auto ms = mean_subtract(x_n);
  const MaskPair masks = build_masks(ms.temporal, ms.spectral);
  const FeatureMap out = recombine(x_n, ms.temporal, ms.spectral, masks, {1.0f});
  CHECK(out.v == x_n.v);
}

TEST_CASE("recombine: alpha = 0 equals x_t * M_t exactly") {
  const FeatureMap x_n = normalize01(random_map(6));
  const auto ms = mean_subtract(x_n);
  const MaskPair masks = build_masks(ms.temporal, ms.spectral);
  const FeatureMap out = recombine(x_n, ms.temporal, ms.spectral, masks, {0.0f});
  for (size_t i = 0; i < out.v.size(); ++i) {
    const float want = masks.temporal[i] ? ms.temporal.v[i] : 0.0f;
    CHECK(out.v[i] == want);
  }
}

TEST_CASE("recombine: hand evaluation at alpha = 0.5") {
  const FeatureMap ones = constant_map(1.0f);
  MaskPair masks;
  masks.temporal.fill(1);
  masks.spectral.fill(1);
  const FeatureMap out = recombine(ones, ones, ones, masks, {0.5f});
  for (float v : out.v) CHECK(v == 1.0f);
}

TEST_CASE("denoise_pair: alpha = 1 returns the normalized inputs") {
  FeaturePair pair;
  pair.mfcc = random_map(7);
  pair.mfcc.kind = FeatureKind::MFCC;
  pair.logmel = random_map(8);
  pair.label = Label::Yes;
  pair.provenance = Provenance::Runtime;

  const FeaturePair out = denoise_pair(pair, {1.0f});
  CHECK(out.mfcc.v == normalize01(pair.mfcc).v);
  CHECK(out.logmel.v == normalize01(pair.logmel).v);
  CHECK(out.label == pair.label);
  CHECK(out.mfcc.kind == FeatureKind::MFCC);
}

TEST_CASE("denoise_map moves a noisy map closer to the clean one") {
  // clean structure: a ridge wandering across bands, speech-like
  FeatureMap clean = constant_map(0.0f);
  for (int c = 0; c < kFeatureCols; ++c) {
    const int center = 4 + (c * 10) / kFeatureCols;
    for (int r = 0; r < kNumBands; ++r) {
      const double d = r - center;
      clean.at(r, c) = float(10.0 * std::exp(-0.5 * d * d));
    }
  }
  SeededRng rng(9);
  FeatureMap noisy = clean;
  for (float& v : noisy.v) v += float(rng.uniform(0.0, 6.0)); // evenly distributed noise

  const FeatureMap clean_n = normalize01(clean);
  const FeatureMap noisy_n = normalize01(noisy);
  const FeatureMap denoised = denoise_map(noisy, {0.5f});

  auto mse = [](const FeatureMap& a, const FeatureMap& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
      acc += (double(a.v[i]) - b.v[i]) * (double(a.v[i]) - b.v[i]);
    }
    return acc / double(a.v.size());
  };
  CHECK(mse(denoised, clean_n) < mse(noisy_n, clean_n));
}

TEST_CASE("denoise_map output stays within [-1, 2] for alpha in [0,1]") {
  SeededRng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap m = random_map(100 + uint64_t(trial));
    const float alpha = float(rng.uniform(0.0, 1.0));
    const FeatureMap out = denoise_map(m, {alpha});
    for (float v : out.v) {
      CHECK(v >= -1.0f);
      CHECK(v <= 2.0f);
    }
  }
}
