#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

using namespace kws;
using kws::test::rel_err;
using kws::test::trained_fixture;

namespace {

// noisy evaluation pairs derived from the fixture's corpus
std::vector<FeaturePair> eval_pairs(int n, uint64_t seed) {
  const auto corpus = synth_test_corpus(8, seed);
  const auto noise = synth_noise_recording(SynthNoiseKind::White, 8.0, seed + 1);
  SeededRng rng(seed);
  std::vector<FeaturePair> out;
  const uint32_t max_off = uint32_t(noise.samples.size()) - kClipSamples;
  for (int i = 0; i < n; ++i) {
    const AudioClip& clean = corpus[rng.below(uint32_t(corpus.size()))];
    MixSpec mix;
    mix.snr_db = rng.uniform(0.0, 15.0);
    mix.noise_offset_s = double(rng.below(max_off)) / kSampleRate;
    CLConfig cfg;
    out.push_back(runtime_features(mix_at_snr(clean, noise, mix), cfg));
  }
  return out;
}

} // namespace

TEST_CASE("affine_params_from_range") {
  const QuantParams p = affine_params_from_range(0.0, 2.55);
  CHECK(p.scale == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(p.zero_point == -128);

  const QuantParams degenerate = affine_params_from_range(0.0, 0.0);
  CHECK(degenerate.scale == 1e-6);

  const QuantParams q = affine_params_from_range(-1.0, 1.0);
  // zero must be representable
  const double zero_q = q.zero_point + 0.0 / q.scale;
  CHECK(zero_q >= -128);
  CHECK(zero_q <= 127);
}

TEST_CASE("calibrate: determinism and sample-count gate") {
  const auto& fx = trained_fixture();
  const CalibrationResult a = calibrate(fx.model, fx.train_dn);
  const CalibrationResult b = calibrate(fx.model, fx.train_dn);
  REQUIRE(a.paths.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(a.paths[i].input.scale == b.paths[i].input.scale);
    CHECK(a.paths[i].conv1.zero_point == b.paths[i].conv1.zero_point);
    CHECK(a.paths[i].conv2.scale == b.paths[i].conv2.scale);
  }
  CHECK(a.latent.scale == b.latent.scale);

  std::vector<FeaturePair> small(fx.train_dn.begin(), fx.train_dn.begin() + 3);
  CHECK_THROWS_AS(calibrate(fx.model, small), Error);
  CHECK_THROWS_AS(calibrate(fx.model, std::span<const FeaturePair>{}), Error);
}

TEST_CASE("weight quantization: round-trip error bounded by scale/2") {
  const auto& fx = trained_fixture();
  const QuantizedModel& qm = fx.qm;
  const DualKwsModel dq = dequantize_dual(qm);

  auto check_conv = [](const ConvLayer& orig, const QConv& q, const ConvLayer& back) {
    const double bound = q.w_scale / 2.0 + 1e-12;
    for (size_t i = 0; i < orig.w.v.size(); ++i) {
      CHECK(std::abs(double(orig.w.v[i]) - back.w.v[i]) <= bound);
    }
  };
  check_conv(fx.model.mfcc_path.c1, qm.paths[0].c1, dq.mfcc_path.c1);
  check_conv(fx.model.mfcc_path.c2, qm.paths[0].c2, dq.mfcc_path.c2);
  check_conv(fx.model.mfcc_path.c3, qm.paths[0].c3, dq.mfcc_path.c3);
  check_conv(fx.model.logmel_path.c1, qm.paths[1].c1, dq.logmel_path.c1);
  check_conv(fx.model.logmel_path.c2, qm.paths[1].c2, dq.logmel_path.c2);
  check_conv(fx.model.logmel_path.c3, qm.paths[1].c3, dq.logmel_path.c3);
  const double head_bound = qm.head.w_scale / 2.0 + 1e-12;
  for (size_t i = 0; i < fx.model.head.w.v.size(); ++i) {
    CHECK(std::abs(double(fx.model.head.w.v[i]) - dq.head.w.v[i]) <= head_bound);
  }

  // the max-magnitude weight lands exactly on +-127
  int8_t extreme = 0;
  for (int8_t w : qm.paths[0].c1.w) {
    if (std::abs(int(w)) > std::abs(int(extreme))) extreme = w;
  }
  CHECK(std::abs(int(extreme)) == 127);
}

TEST_CASE("all-zero weights quantize exactly") {
  DualKwsModel zero = make_dual_model(1);
  for (Tensor* t : detail::tensors_of(zero)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  const auto& fx = trained_fixture();
  const QuantizedModel qm = quantize_model(zero, calibrate(zero, fx.train_dn));
  for (int8_t w : qm.paths[0].c1.w) CHECK(w == 0);
  const DualKwsModel back = dequantize_dual(qm);
  for (float w : back.mfcc_path.c1.w.v) CHECK(w == 0.0f);
}

TEST_CASE("quantize -> dequantize -> quantize is exact on weights") {
  const auto& fx = trained_fixture();
  const DualKwsModel dq = dequantize_dual(fx.qm);
  const QuantizedModel qm2 = quantize_model(dq, calibrate(dq, fx.train_dn));
  for (size_t p = 0; p < 2; ++p) {
    CHECK(qm2.paths[p].c1.w == fx.qm.paths[p].c1.w);
    CHECK(qm2.paths[p].c2.w == fx.qm.paths[p].c2.w);
    CHECK(qm2.paths[p].c3.w == fx.qm.paths[p].c3.w);
    CHECK(qm2.paths[p].c1.w_scale == fx.qm.paths[p].c1.w_scale);
  }
  CHECK(qm2.head.w == fx.qm.head.w);
}

TEST_CASE("fixed-point multiplier approximates the real multiplier") {
  SeededRng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double m = std::exp(rng.uniform(std::log(1e-6), std::log(8.0)));
    const FixedPointMult fp = quantize_multiplier(m);
    const int32_t acc = int32_t(rng.below(1 << 22)) - (1 << 21);
    const double want = double(acc) * m;
    const double got = double(fixed_point_mul(acc, fp));
    CHECK(std::abs(got - round_half_away(want)) <= 1.0 + std::abs(want) * 3e-9);
  }
  CHECK_THROWS_AS(quantize_multiplier(0.0), Error);
}

TEST_CASE("quantized_inference: argmax and probability agreement with float") {
  const auto& fx = trained_fixture();
  auto pairs = eval_pairs(300, 21);
  pairs.insert(pairs.end(), fx.test_dn.begin(), fx.test_dn.end());

  int agree = 0;
  std::vector<double> devs;
  for (const FeaturePair& p : pairs) {
    const float fprob = forward(fx.model, p).prob;
    const QuantInference qi = quantized_inference(fx.qm, p);
    if (label_of(fprob) == qi.predicted) ++agree;
    devs.push_back(std::abs(prob_of(qi.prob_q) - double(fprob)));
  }
  CHECK(double(agree) / double(pairs.size()) >= 0.97);
  std::sort(devs.begin(), devs.end());
  CHECK(devs[size_t(0.95 * double(devs.size()))] <= 0.05);
}

TEST_CASE("quantized_inference: latent lengths and determinism") {
  const auto& fx = trained_fixture();
  const QuantInference a = quantized_inference(fx.qm, fx.test_dn[0]);
  const QuantInference b = quantized_inference(fx.qm, fx.test_dn[0]);
  CHECK(a.latent_q.size() == 320);
  CHECK(a.latent_q == b.latent_q);
  CHECK(a.prob_q == b.prob_q);
  CHECK(a.confidence_q >= 128);
  CHECK(a.confidence_q <= 255);

  // single model: 160-entry latent site
  SingleKwsModel sm = make_single_model(4);
  const QuantizedModel sqm = quantize_model(sm, calibrate(sm, fx.train_dn));
  CHECK(quantized_inference(sqm, fx.test_dn[0]).latent_q.size() == 160);
}

TEST_CASE("quantized_inference: zero model decodes to 0.5 within one step") {
  DualKwsModel zero = make_dual_model(5);
  for (Tensor* t : detail::tensors_of(zero)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  const auto& fx = trained_fixture();
  const QuantizedModel qm = quantize_model(zero, calibrate(zero, fx.train_dn));

  FeaturePair zeros;
  const QuantInference qi = quantized_inference(qm, zeros);
  CHECK(std::abs(prob_of(qi.prob_q) - 0.5) <= 1.0 / 256.0);
}

TEST_CASE("confidence threshold mapping to the 0..255 grid") {
  CHECK(confidence_threshold_from_prob(0.85) == 217);
  CHECK(confidence_threshold_from_prob(0.80) == 204);
  CHECK(confidence_threshold_from_prob(0.75) == 192);
  CHECK(confidence_threshold_from_prob(0.70) == 179);
}

TEST_CASE("quantized checkpoint round trips with artifacts") {
  const auto& fx = trained_fixture();
  const auto path = test::temp_dir() / "model.qckpt";
  save_quantized_checkpoint(path, fx.qm, &fx.artifacts);
  const QuantizedCheckpoint back = load_quantized_checkpoint(path);

  REQUIRE(back.model.paths.size() == 2);
  CHECK(back.model.paths[0].c1.w == fx.qm.paths[0].c1.w);
  CHECK(back.model.paths[1].c3.w == fx.qm.paths[1].c3.w);
  CHECK(back.model.head.w == fx.qm.head.w);
  CHECK(back.model.latent_site.scale == fx.qm.latent_site.scale);

  REQUIRE(back.artifacts.has_value());
  CHECK(back.artifacts->yes.prototype == fx.artifacts.yes.prototype);
  CHECK(back.artifacts->no.threshold == fx.artifacts.no.threshold);
  CHECK(back.artifacts->yes.n_sigma == fx.artifacts.yes.n_sigma);

  // loaded model behaves identically
  for (const FeaturePair& p : fx.test_dn) {
    const QuantInference a = quantized_inference(fx.qm, p);
    const QuantInference b = quantized_inference(back.model, p);
    CHECK(a.prob_q == b.prob_q);
    CHECK(a.latent_q == b.latent_q);
  }

  std::ofstream(path, std::ios::binary) << "junk";
  CHECK_THROWS_AS(load_quantized_checkpoint(path), Error);
}
