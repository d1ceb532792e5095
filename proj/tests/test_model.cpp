#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "reference_model.hpp"

using namespace kws;
using kws::test::rel_err;

namespace {

FeaturePair random_pair(uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SeededRng rng(seed);
  FeaturePair p;
  p.mfcc.kind = FeatureKind::MFCC;
  for (float& v : p.mfcc.v) v = float(rng.uniform(lo, hi));
  for (float& v : p.logmel.v) v = float(rng.uniform(lo, hi));
  return p;
}

std::vector<float> flat_grads(DualKwsModel& g) {
  std::vector<float> flat;
  for (Tensor* t : detail::tensors_of(g)) flat.insert(flat.end(), t->v.begin(), t->v.end());
  return flat;
}

} // namespace

TEST_CASE("parameter counts match the architecture") {
  const DualKwsModel dual = make_dual_model(1);
  const SingleKwsModel single = make_single_model(1);
  CHECK(param_count(dual) == 1595);
  CHECK(param_count(single) == 798);
  // one conv path: 25*1*5+5 + 25*5*2+2 + 25*2*5+5
  CHECK(param_count(dual.mfcc_path) == 130 + 252 + 255);
  CHECK(param_count(dual.mfcc_path) == 637);
}

TEST_CASE("conv2d_forward: shape chain 20x16 -> 16x12 -> 12x8 -> 8x4") {
  const DualKwsModel m = make_dual_model(2);
  Tensor in = Tensor::zeros({1, 20, 16});
  SeededRng rng(2);
  for (float& v : in.v) v = float(rng.uniform(-1.0, 1.0));

  const Tensor a1 = conv2d_forward(in, m.mfcc_path.c1, true);
  CHECK(a1.shape == std::vector<int>{5, 16, 12});
  const Tensor a2 = conv2d_forward(a1, m.mfcc_path.c2, true);
  CHECK(a2.shape == std::vector<int>{2, 12, 8});
  const Tensor a3 = conv2d_forward(a2, m.mfcc_path.c3, true);
  CHECK(a3.shape == std::vector<int>{5, 8, 4});
  CHECK(a3.size() == kPathLatent);

  CHECK_THROWS_AS(conv2d_forward(a3, m.mfcc_path.c1, true), Error); // 8x4 smaller than kernel
  CHECK_THROWS_AS(conv2d_forward(in, m.mfcc_path.c2, true), Error); // channel mismatch
}

TEST_CASE("conv2d_forward: zero weights give a constant ReLU(bias) map") {
  ConvLayer layer;
  layer.in_c = 1;
  layer.out_c = 2;
  layer.w = Tensor::zeros({2, 1, 5, 5});
  layer.b = Tensor::zeros({2});
  layer.b.v = {0.75f, -0.5f};

  Tensor in = Tensor::zeros({1, 20, 16});
  SeededRng rng(3);
  for (float& v : in.v) v = float(rng.uniform(-2.0, 2.0));

  const Tensor out = conv2d_forward(in, layer, true);
  for (int i = 0; i < 16 * 12; ++i) {
    CHECK(out.v[size_t(i)] == 0.75f);
    CHECK(out.v[size_t(16 * 12 + i)] == 0.0f);
  }
}

TEST_CASE("conv2d_forward: delta kernel crops the center") {
  ConvLayer layer;
  layer.in_c = 1;
  layer.out_c = 1;
  layer.w = Tensor::zeros({1, 1, 5, 5});
  layer.w.v[size_t(2 * 5 + 2)] = 1.0f; // center tap
  layer.b = Tensor::zeros({1});

  Tensor in = Tensor::zeros({1, 20, 16});
  SeededRng rng(4);
  for (float& v : in.v) v = float(rng.uniform(-2.0, 2.0));

  const Tensor out = conv2d_forward(in, layer, false);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 12; ++x) {
      CHECK(out.v[size_t(y * 12 + x)] == in.v[size_t((y + 2) * 16 + (x + 2))]);
    }
  }
}

TEST_CASE("forward: zero model gives prob 0.5; latent is the path concat") {
  DualKwsModel m = make_dual_model(5);
  for (Tensor* t : detail::tensors_of(m)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  const ForwardResult r = forward(m, random_pair(5));
  CHECK(r.prob == 0.5f);
  REQUIRE(r.latent.size() == size_t(kDualLatent));

  // zero out only the logmel path of a random model: back half of latent dies
  DualKwsModel m2 = make_dual_model(6);
  for (Tensor* t : {&m2.logmel_path.c1.w, &m2.logmel_path.c1.b}) {
    std::fill(t->v.begin(), t->v.end(), 0.0f);
  }
  const ForwardResult r2 = forward(m2, random_pair(6));
  double front = 0.0, back = 0.0;
  for (int i = 0; i < kPathLatent; ++i) {
    front += std::abs(r2.latent[size_t(i)]);
    back += std::abs(r2.latent[size_t(i + kPathLatent)]);
  }
  CHECK(front > 0.0);
  CHECK(back == 0.0); // conv1 dead -> ReLU chain stays at max(bias,0)=0
}

TEST_CASE("forward: the two paths are not symmetric") {
  const DualKwsModel m = make_dual_model(7);
  FeaturePair p = random_pair(7);
  FeaturePair swapped = p;
  std::swap(swapped.mfcc.v, swapped.logmel.v);
  CHECK(forward(m, p).prob != forward(m, swapped).prob);
}

TEST_CASE("forward agrees with the double-precision reference") {
  const DualKwsModel m = make_dual_model(8);
  test::ref::Net net = test::ref::of(m);
  for (uint64_t s = 0; s < 10; ++s) {
    const FeaturePair p = random_pair(100 + s);
    CHECK(rel_err(double(forward(m, p).prob), test::ref::prob(net, p), 1e-6) < 1e-5);
  }
}

TEST_CASE("backward matches central finite differences on the reference") {
  const FeaturePair pair = random_pair(9);
  const DualKwsModel m = make_dual_model(9);
  DualKwsModel g = zero_like(m);
  backward_accumulate(m, pair, 1.0f, g);
  std::vector<float> flat = flat_grads(g);

  test::ref::Net net = test::ref::of(m);
  auto ps = test::ref::params(net);
  REQUIRE(ps.size() == flat.size());

  SeededRng rng(9);
  int checked = 0, draws = 0;
  while (checked < 120 && draws < 2000) {
    ++draws;
    const size_t i = rng.below(uint32_t(ps.size()));
    auto fd_at = [&](double h) {
      const double orig = *ps[i];
      *ps[i] = orig + h;
      const double lp = test::ref::loss(net, pair, 1.0);
      *ps[i] = orig - h;
      const double lm = test::ref::loss(net, pair, 1.0);
      *ps[i] = orig;
      return (lp - lm) / (2.0 * h);
    };
    const double fd = fd_at(1e-3);
    const double fd_fine = fd_at(1e-4);
    // skip coordinates whose 1e-3 step straddles a ReLU kink
    if (std::abs(fd - fd_fine) > 1e-7 + 3e-5 * std::abs(fd)) continue;
    ++checked;
    if (std::abs(fd) < 1e-8 && std::abs(flat[i]) < 1e-8) continue;
    CHECK(rel_err(double(flat[i]), fd, 1e-6) <= 1e-4);
  }
  CHECK(checked >= 100);
}

TEST_CASE("backward: BCE stationary point zeroes the head-bias gradient") {
  DualKwsModel m = make_dual_model(10);
  for (Tensor* t : detail::tensors_of(m)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  DualKwsModel g = zero_like(m);
  backward_accumulate(m, random_pair(10), 0.5f, g); // prob == target == 0.5
  CHECK(g.head.b.v[0] == 0.0f);
}

TEST_CASE("backward: ReLU-dead units get zero gradients") {
  DualKwsModel m = make_dual_model(11);
  // large negative conv3 biases kill both paths' outputs
  for (Tensor* t : {&m.mfcc_path.c3.b, &m.logmel_path.c3.b}) {
    std::fill(t->v.begin(), t->v.end(), -100.0f);
  }
  DualKwsModel g = zero_like(m);
  backward_accumulate(m, random_pair(11), 1.0f, g);
  for (Tensor* t : {&g.mfcc_path.c3.w, &g.logmel_path.c3.w, &g.mfcc_path.c2.w, &g.head.w}) {
    for (float v : t->v) CHECK(v == 0.0f);
  }
  CHECK(g.head.b.v[0] != 0.0f); // the bias path is still live
}

TEST_CASE("train: lr = 0 leaves the model unchanged") {
  DualKwsModel m = make_dual_model(12);
  const DualKwsModel before = m;
  std::vector<FeaturePair> batch;
  for (uint64_t s = 0; s < 4; ++s) {
    batch.push_back(random_pair(200 + s));
    batch.back().label = s % 2 == 0 ? Label::Yes : Label::No;
  }
  TrainConfig tc;
  tc.learning_rate = 0.0f;
  tc.epochs = 3;
  const TrainReport rep = train(m, batch, tc);
  CHECK(rep.epoch_loss.size() == 3);
  auto ta = detail::tensors_of(m);
  auto tb = detail::tensors_of(before);
  for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->v == tb[i]->v);
}

TEST_CASE("train: loss strictly decreases on a separable toy problem") {
  // linearly separable feature pattern with small within-class jitter
  std::vector<FeaturePair> batch;
  SeededRng rng(13);
  for (int i = 0; i < 16; ++i) {
    FeaturePair p;
    p.label = i % 2 == 0 ? Label::Yes : Label::No;
    const float sign = i % 2 == 0 ? 1.0f : -1.0f;
    for (size_t j = 0; j < p.mfcc.v.size(); ++j) {
      const float base = (j % 7 == 0) ? sign * 0.8f : 0.1f;
      p.mfcc.v[j] = base + float(rng.uniform(-0.02, 0.02));
      p.logmel.v[j] = base + float(rng.uniform(-0.02, 0.02));
    }
    batch.push_back(std::move(p));
  }
  DualKwsModel m = make_dual_model(13);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 0; // full batch
  tc.seed = 13;
  const TrainReport rep = train(m, batch, tc);
  REQUIRE(rep.epoch_loss.size() == 10);
  CHECK_FALSE(rep.single_class_batch);
  for (size_t e = 1; e < rep.epoch_loss.size(); ++e) {
    CHECK(rep.epoch_loss[e] < rep.epoch_loss[e - 1]);
  }
}

TEST_CASE("train: deterministic per seed; single-class batch warns") {
  std::vector<FeaturePair> batch;
  for (uint64_t s = 0; s < 6; ++s) {
    batch.push_back(random_pair(300 + s));
    batch.back().label = s % 2 == 0 ? Label::Yes : Label::No;
  }
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 77;
  DualKwsModel a = make_dual_model(14);
  DualKwsModel b = make_dual_model(14);
  train(a, batch, tc);
  train(b, batch, tc);
  auto ta = detail::tensors_of(a);
  auto tb = detail::tensors_of(b);
  for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->v == tb[i]->v);

  std::vector<FeaturePair> single(batch.begin(), batch.begin() + 1);
  single[0].label = Label::Yes;
  DualKwsModel c = make_dual_model(14);
  CHECK(train(c, single, tc).single_class_batch);

  std::vector<FeaturePair> unlabeled(1);
  CHECK_THROWS_AS(train(c, unlabeled, tc), Error);
}

TEST_CASE("train: Adam and fake-quant modes make progress") {
  std::vector<FeaturePair> batch;
  SeededRng rng(15);
  for (int i = 0; i < 8; ++i) {
    FeaturePair p = random_pair(400 + uint64_t(i));
    p.label = i % 2 == 0 ? Label::Yes : Label::No;
    const float shift = i % 2 == 0 ? 0.5f : -0.5f;
    for (float& v : p.mfcc.v) v += shift;
    batch.push_back(std::move(p));
  }
  TrainConfig adam;
  adam.optimizer = TrainConfig::Optimizer::Adam;
  adam.epochs = 30;
  DualKwsModel m1 = make_dual_model(15);
  const TrainReport r1 = train(m1, batch, adam);
  CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());

  TrainConfig fq;
  fq.fake_quant_weights = true;
  fq.epochs = 30;
  fq.learning_rate = 0.01f;
  DualKwsModel m2 = make_dual_model(15);
  const TrainReport r2 = train(m2, batch, fq);
  CHECK(r2.epoch_loss.back() < r2.epoch_loss.front());
}

TEST_CASE("single model: forward, latent length, training path") {
  SingleKwsModel m = make_single_model(16);
  const FeaturePair p = random_pair(16);
  const ForwardResult r = forward(m, p);
  CHECK(r.latent.size() == size_t(kPathLatent));
  CHECK(r.prob > 0.0f);
  CHECK(r.prob < 1.0f);

  std::vector<FeaturePair> batch;
  for (int i = 0; i < 8; ++i) {
    FeaturePair q = random_pair(500 + uint64_t(i));
    q.label = i % 2 == 0 ? Label::Yes : Label::No;
    const float shift = i % 2 == 0 ? 0.4f : -0.4f;
    for (float& v : q.mfcc.v) v += shift;
    batch.push_back(std::move(q));
  }
  TrainConfig tc;
  tc.epochs = 40;
  tc.learning_rate = 0.01f;
  const TrainReport rep = train(m, batch, tc);
  CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());
}

TEST_CASE("checkpoints round trip and validate") {
  const auto dir = test::temp_dir();
  const DualKwsModel m = make_dual_model(17);
  save_checkpoint(dir / "dual.ckpt", m);
  CHECK(checkpoint_arch(dir / "dual.ckpt") == kDualArchTag);

  const DualKwsModel back = load_dual_checkpoint(dir / "dual.ckpt");
  auto ta = detail::tensors_of(const_cast<DualKwsModel&>(m));
  auto tb = detail::tensors_of(back);
  for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->v == tb[i]->v);

  const SingleKwsModel s = make_single_model(17);
  save_checkpoint(dir / "single.ckpt", s);
  CHECK_THROWS_AS(load_dual_checkpoint(dir / "single.ckpt"), Error);

  std::ofstream(dir / "garbage.ckpt", std::ios::binary) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_dual_checkpoint(dir / "garbage.ckpt"), Error);
}
