#include "kws/model.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "binio.hpp"

namespace kws {

namespace {

constexpr int kMapH = kNumBands;   // 20
constexpr int kMapW = kFeatureCols; // 16

void conv_forward_raw(const float* in, int in_c, int h, int w, const ConvLayer& layer,
                      bool relu, float* out) {
  const int oh = h - kKernel + 1;
  const int ow = w - kKernel + 1;
  for (int oc = 0; oc < layer.out_c; ++oc) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        float acc = layer.b.v[size_t(oc)];
        for (int ic = 0; ic < in_c; ++ic) {
          const float* ip = in + (ic * h + y) * w + x;
          const float* wp = layer.w.v.data() + size_t((oc * in_c + ic) * kKernel * kKernel);
          for (int u = 0; u < kKernel; ++u) {
            const float* row = ip + u * w;
            for (int v = 0; v < kKernel; ++v) acc += row[v] * wp[u * kKernel + v];
          }
        }
        if (relu && acc < 0.0f) acc = 0.0f;
        out[(oc * oh + y) * ow + x] = acc;
      }
    }
  }
}

// d_post is the gradient w.r.t. the post-ReLU output; d_in may be null for
// the first layer. d_in must be zeroed by the caller. Accumulation runs in
// double so cancellation does not wash out small gradient coordinates; the
// single rounding happens when adding into the float gradient tensors.
void conv_backward_raw(const float* in, int in_c, int h, int w, const ConvLayer& layer,
                       const float* post, const double* d_post, ConvLayer& grads,
                       double* d_in) {
  const int oh = h - kKernel + 1;
  const int ow = w - kKernel + 1;
  std::array<double, 256> dw{}; // per (oc, ic) 5x5 block, max 25 used
  for (int oc = 0; oc < layer.out_c; ++oc) {
    double db = 0.0;
    for (int ic = 0; ic < in_c; ++ic) {
      std::fill(dw.begin(), dw.begin() + kKernel * kKernel, 0.0);
      const float* wp = layer.w.v.data() + size_t((oc * in_c + ic) * kKernel * kKernel);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const int oi = (oc * oh + y) * ow + x;
          if (post[oi] <= 0.0f) continue; // ReLU-dead unit
          const double g = d_post[oi];
          if (ic == 0) db += g;
          const float* ip = in + (ic * h + y) * w + x;
          double* dip = d_in ? d_in + (ic * h + y) * w + x : nullptr;
          for (int u = 0; u < kKernel; ++u) {
            for (int v = 0; v < kKernel; ++v) {
              dw[size_t(u * kKernel + v)] += g * ip[u * w + v];
              if (dip) dip[u * w + v] += g * wp[u * kKernel + v];
            }
          }
        }
      }
      float* gw = grads.w.v.data() + size_t((oc * in_c + ic) * kKernel * kKernel);
      for (int k = 0; k < kKernel * kKernel; ++k) gw[size_t(k)] += float(dw[size_t(k)]);
    }
    grads.b.v[size_t(oc)] += float(db);
  }
}

ConvLayer make_conv(int in_c, int out_c, SeededRng& rng) {
  ConvLayer l;
  l.in_c = in_c;
  l.out_c = out_c;
  l.w = Tensor::zeros({out_c, in_c, kKernel, kKernel});
  l.b = Tensor::zeros({out_c});
  const double fan_in = in_c * kKernel * kKernel;
  const double fan_out = out_c * kKernel * kKernel;
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (float& w : l.w.v) w = float(rng.uniform(-a, a));
  return l;
}

DenseLayer make_dense(int in, SeededRng& rng) {
  DenseLayer l;
  l.in = in;
  l.w = Tensor::zeros({in});
  l.b = Tensor::zeros({1});
  const double a = std::sqrt(6.0 / (in + 1));
  for (float& w : l.w.v) w = float(rng.uniform(-a, a));
  return l;
}

PathWeights make_path(SeededRng& rng) {
  PathWeights p;
  p.c1 = make_conv(1, kConv1Channels, rng);
  p.c2 = make_conv(kConv1Channels, kConv2Channels, rng);
  p.c3 = make_conv(kConv2Channels, kConv3Channels, rng);
  return p;
}

float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

struct DualTrace {
  detail::PathTrace mfcc, logmel;
  std::array<float, kDualLatent> latent{};
  float logit = 0.0f;
  float prob = 0.0f;
};

struct SingleTrace {
  detail::PathTrace path;
  float logit = 0.0f;
  float prob = 0.0f;
};

DualTrace run_forward(const DualKwsModel& m, const FeaturePair& pair) {
  DualTrace t;
  detail::path_forward(m.mfcc_path, pair.mfcc.v.data(), t.mfcc);
  detail::path_forward(m.logmel_path, pair.logmel.v.data(), t.logmel);
  for (int i = 0; i < kPathLatent; ++i) {
    t.latent[size_t(i)] = t.mfcc.a3[size_t(i)];
    t.latent[size_t(i + kPathLatent)] = t.logmel.a3[size_t(i)];
  }
  float z = m.head.b.v[0];
  for (int i = 0; i < kDualLatent; ++i) z += m.head.w.v[size_t(i)] * t.latent[size_t(i)];
  t.logit = z;
  t.prob = sigmoid(z);
  return t;
}

SingleTrace run_forward(const SingleKwsModel& m, const FeaturePair& pair) {
  SingleTrace t;
  detail::path_forward(m.path, pair.mfcc.v.data(), t.path);
  float z = m.head.b.v[0];
  for (int i = 0; i < kPathLatent; ++i) z += m.head.w.v[size_t(i)] * t.path.a3[size_t(i)];
  t.logit = z;
  t.prob = sigmoid(z);
  return t;
}

template <typename Model>
void sgd_step(Model& model, Model& grads, float scale) {
  auto mt = detail::tensors_of(model);
  auto gt = detail::tensors_of(grads);
  for (size_t i = 0; i < mt.size(); ++i) {
    for (size_t j = 0; j < mt[i]->v.size(); ++j) mt[i]->v[j] -= scale * gt[i]->v[j];
  }
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;

  template <typename Model>
  explicit AdamState(Model& model) {
    for (Tensor* t : detail::tensors_of(model)) {
      m.emplace_back(t->v.size(), 0.0);
      v.emplace_back(t->v.size(), 0.0);
    }
  }
};

template <typename Model>
void adam_step(Model& model, Model& grads, float lr, float inv_batch, AdamState& st) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.step;
  const double c1 = 1.0 - std::pow(b1, double(st.step));
  const double c2 = 1.0 - std::pow(b2, double(st.step));
  auto mt = detail::tensors_of(model);
  auto gt = detail::tensors_of(grads);
  for (size_t i = 0; i < mt.size(); ++i) {
    for (size_t j = 0; j < mt[i]->v.size(); ++j) {
      const double g = double(gt[i]->v[j]) * inv_batch;
      st.m[i][j] = b1 * st.m[i][j] + (1.0 - b1) * g;
      st.v[i][j] = b2 * st.v[i][j] + (1.0 - b2) * g * g;
      mt[i]->v[j] -= float(lr * (st.m[i][j] / c1) / (std::sqrt(st.v[i][j] / c2) + eps));
    }
  }
}

// Per-tensor symmetric quantize-dequantize, the weight-side fake-quant used
// by the straight-through training mode.
template <typename Model>
Model fake_quant_copy(const Model& model) {
  Model copy = model;
  for (Tensor* t : detail::tensors_of(copy)) {
    float maxabs = 0.0f;
    for (float w : t->v) maxabs = std::max(maxabs, std::abs(w));
    const double scale = std::max(double(maxabs) / 127.0, 1e-6);
    for (float& w : t->v) w = float(scale * double(round_half_away(w / scale)));
  }
  return copy;
}

template <typename Model>
TrainReport train_impl(Model& model, std::span<const FeaturePair> batch, const TrainConfig& cfg) {
  if (batch.empty()) fail(ErrorKind::Usage, "empty training batch");
  bool has_yes = false, has_no = false;
  for (const FeaturePair& p : batch) {
    if (!p.label || *p.label == Label::NoiseOnly)
      fail(ErrorKind::Usage, "training batch contains unlabeled pair");
    (*p.label == Label::Yes ? has_yes : has_no) = true;
  }

  TrainReport report;
  report.single_class_batch = !(has_yes && has_no);

  SeededRng rng(cfg.seed);
  AdamState adam(model);
  const size_t n = batch.size();
  const size_t bs = cfg.batch_size <= 0 ? n : std::min(size_t(cfg.batch_size), n);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t base = 0; base < n; base += bs) {
      const size_t m = std::min(bs, n - base);
      Model grads = zero_like(model);
      const Model* fwd_model = &model;
      Model fq;
      if (cfg.fake_quant_weights) {
        fq = fake_quant_copy(model);
        fwd_model = &fq;
      }
      for (size_t k = 0; k < m; ++k) {
        const FeaturePair& p = batch[order[base + k]];
        loss_sum += backward_accumulate(*fwd_model, p, target_of(*p.label), grads).loss;
      }
      if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
        adam_step(model, grads, cfg.learning_rate, 1.0f / float(m), adam);
      } else {
        sgd_step(model, grads, cfg.learning_rate / float(m));
      }
    }
    report.epoch_loss.push_back(float(loss_sum / double(n)));
  }
  return report;
}

void write_tensor_record(std::ostream& out, const std::string& name, const Tensor& t) {
  binio::write_str(out, name);
  binio::write_u8(out, uint8_t(t.shape.size()));
  for (int d : t.shape) binio::write_u32(out, uint32_t(d));
  for (float v : t.v) binio::write_f32(out, v);
}

constexpr char kCkptMagic[8] = {'K', 'W', 'S', 'C', 'K', 'P', 'T', '1'};

template <typename Model>
void save_checkpoint_impl(const std::filesystem::path& path, const Model& model,
                          const char* arch) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out.write(kCkptMagic, 8);
  binio::write_u32(out, 1); // format version
  binio::write_str(out, arch);
  auto named = detail::named_tensors(const_cast<Model&>(model));
  binio::write_u32(out, uint32_t(named.size()));
  for (auto& [name, t] : named) write_tensor_record(out, name, *t);
  if (!out) fail(ErrorKind::State, "write failed: " + path.string());
}

std::map<std::string, Tensor> read_tensor_records(std::istream& in, const std::string& want_arch,
                                                  const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    fail(ErrorKind::Format, "not a checkpoint: " + path.string());
  const uint32_t version = binio::read_u32(in);
  if (version != 1) fail(ErrorKind::Format, "unsupported checkpoint version");
  const std::string arch = binio::read_str(in);
  if (arch != want_arch)
    fail(ErrorKind::Format, "architecture mismatch: got " + arch + ", want " + want_arch);
  const uint32_t n = binio::read_u32(in);
  std::map<std::string, Tensor> tensors;
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = binio::read_str(in);
    Tensor t;
    const uint8_t ndim = binio::read_u8(in);
    int64_t total = 1;
    for (int d = 0; d < ndim; ++d) {
      t.shape.push_back(int(binio::read_u32(in)));
      total *= t.shape.back();
    }
    t.v.resize(size_t(total));
    for (float& v : t.v) v = binio::read_f32(in);
    tensors.emplace(name, std::move(t));
  }
  return tensors;
}

template <typename Model>
Model load_checkpoint_impl(const std::filesystem::path& path, const char* arch,
                           Model (*make)(uint64_t)) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  auto tensors = read_tensor_records(in, arch, path);
  Model model = make(0);
  for (auto& [name, t] : detail::named_tensors(model)) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorKind::Format, "missing tensor " + name);
    if (it->second.shape != t->shape) fail(ErrorKind::Format, "shape mismatch for " + name);
    *t = std::move(it->second);
    tensors.erase(it);
  }
  if (!tensors.empty()) fail(ErrorKind::Format, "unexpected tensor " + tensors.begin()->first);
  return model;
}

} // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  int64_t total = 1;
  for (int d : shape) total *= d;
  t.shape = std::move(shape);
  t.v.assign(size_t(total), 0.0f);
  return t;
}

DualKwsModel make_dual_model(uint64_t seed) {
  SeededRng rng(seed);
  DualKwsModel m;
  m.mfcc_path = make_path(rng);
  m.logmel_path = make_path(rng);
  m.head = make_dense(kDualLatent, rng);
  return m;
}

SingleKwsModel make_single_model(uint64_t seed) {
  SeededRng rng(seed);
  SingleKwsModel m;
  m.path = make_path(rng);
  m.head = make_dense(kPathLatent, rng);
  return m;
}

int64_t param_count(const ConvLayer& l) { return l.w.size() + l.b.size(); }
int64_t param_count(const PathWeights& p) {
  return param_count(p.c1) + param_count(p.c2) + param_count(p.c3);
}
int64_t param_count(const DualKwsModel& m) {
  return param_count(m.mfcc_path) + param_count(m.logmel_path) + m.head.w.size() +
         m.head.b.size();
}
int64_t param_count(const SingleKwsModel& m) {
  return param_count(m.path) + m.head.w.size() + m.head.b.size();
}

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer, bool relu) {
  if (input.shape.size() != 3 || input.shape[0] != layer.in_c)
    fail(ErrorKind::Shape, "conv input must be [in_c, H, W]");
  const int h = input.shape[1], w = input.shape[2];
  if (h < kKernel || w < kKernel) fail(ErrorKind::Shape, "conv input smaller than kernel");
  Tensor out = Tensor::zeros({layer.out_c, h - kKernel + 1, w - kKernel + 1});
  conv_forward_raw(input.v.data(), layer.in_c, h, w, layer, relu, out.v.data());
  return out;
}

float target_of(Label label) { return label == Label::Yes ? 1.0f : 0.0f; }
Label label_of(float prob) { return prob > 0.5f ? Label::Yes : Label::No; }

float bce_loss(float prob, float target) {
  const double p = std::min(std::max(double(prob), 1e-12), 1.0 - 1e-12);
  return float(-(double(target) * std::log(p) + (1.0 - double(target)) * std::log(1.0 - p)));
}

ForwardResult forward(const DualKwsModel& model, const FeaturePair& pair) {
  const DualTrace t = run_forward(model, pair);
  ForwardResult r;
  r.prob = t.prob;
  r.latent.assign(t.latent.begin(), t.latent.end());
  return r;
}

ForwardResult forward(const SingleKwsModel& model, const FeaturePair& pair) {
  const SingleTrace t = run_forward(model, pair);
  ForwardResult r;
  r.prob = t.prob;
  r.latent.assign(t.path.a3.begin(), t.path.a3.end());
  return r;
}

BackwardResult backward_accumulate(const DualKwsModel& model, const FeaturePair& pair,
                                   float target, DualKwsModel& grads) {
  const DualTrace t = run_forward(model, pair);
  const double dz = double(t.prob) - double(target);
  grads.head.b.v[0] += float(dz);
  std::array<double, kPathLatent> d_mfcc, d_logmel;
  for (int i = 0; i < kDualLatent; ++i) {
    grads.head.w.v[size_t(i)] += float(dz * t.latent[size_t(i)]);
    const double dl = dz * model.head.w.v[size_t(i)];
    if (i < kPathLatent) d_mfcc[size_t(i)] = dl;
    else d_logmel[size_t(i - kPathLatent)] = dl;
  }
  detail::path_backward(model.mfcc_path, t.mfcc, d_mfcc.data(), grads.mfcc_path);
  detail::path_backward(model.logmel_path, t.logmel, d_logmel.data(), grads.logmel_path);
  return {bce_loss(t.prob, target), t.prob};
}

BackwardResult backward_accumulate(const SingleKwsModel& model, const FeaturePair& pair,
                                   float target, SingleKwsModel& grads) {
  const SingleTrace t = run_forward(model, pair);
  const double dz = double(t.prob) - double(target);
  grads.head.b.v[0] += float(dz);
  std::array<double, kPathLatent> d_path;
  for (int i = 0; i < kPathLatent; ++i) {
    grads.head.w.v[size_t(i)] += float(dz * t.path.a3[size_t(i)]);
    d_path[size_t(i)] = dz * model.head.w.v[size_t(i)];
  }
  detail::path_backward(model.path, t.path, d_path.data(), grads.path);
  return {bce_loss(t.prob, target), t.prob};
}

DualKwsModel zero_like(const DualKwsModel& m) {
  DualKwsModel z = m;
  for (Tensor* t : detail::tensors_of(z)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  return z;
}

SingleKwsModel zero_like(const SingleKwsModel& m) {
  SingleKwsModel z = m;
  for (Tensor* t : detail::tensors_of(z)) std::fill(t->v.begin(), t->v.end(), 0.0f);
  return z;
}

TrainReport train(DualKwsModel& model, std::span<const FeaturePair> batch,
                  const TrainConfig& cfg) {
  return train_impl(model, batch, cfg);
}

TrainReport train(SingleKwsModel& model, std::span<const FeaturePair> batch,
                  const TrainConfig& cfg) {
  return train_impl(model, batch, cfg);
}

void save_checkpoint(const std::filesystem::path& path, const DualKwsModel& model) {
  save_checkpoint_impl(path, model, kDualArchTag);
}

void save_checkpoint(const std::filesystem::path& path, const SingleKwsModel& model) {
  save_checkpoint_impl(path, model, kSingleArchTag);
}

std::string checkpoint_arch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    fail(ErrorKind::Format, "not a checkpoint: " + path.string());
  binio::read_u32(in);
  return binio::read_str(in);
}

DualKwsModel load_dual_checkpoint(const std::filesystem::path& path) {
  return load_checkpoint_impl<DualKwsModel>(path, kDualArchTag, make_dual_model);
}

SingleKwsModel load_single_checkpoint(const std::filesystem::path& path) {
  return load_checkpoint_impl<SingleKwsModel>(path, kSingleArchTag, make_single_model);
}

namespace detail {

void path_forward(const PathWeights& pw, const float* in, PathTrace& t) {
  std::copy(in, in + kFeatureSize, t.in.begin());
  conv_forward_raw(t.in.data(), 1, kMapH, kMapW, pw.c1, true, t.a1.data());
  conv_forward_raw(t.a1.data(), kConv1Channels, 16, 12, pw.c2, true, t.a2.data());
  conv_forward_raw(t.a2.data(), kConv2Channels, 12, 8, pw.c3, true, t.a3.data());
}

void path_backward(const PathWeights& pw, const PathTrace& t, const double* d_a3,
                   PathWeights& grads) {
  std::array<double, 192> d_a2{};
  std::array<double, 960> d_a1{};
  conv_backward_raw(t.a2.data(), kConv2Channels, 12, 8, pw.c3, t.a3.data(), d_a3, grads.c3,
                    d_a2.data());
  conv_backward_raw(t.a1.data(), kConv1Channels, 16, 12, pw.c2, t.a2.data(), d_a2.data(),
                    grads.c2, d_a1.data());
  conv_backward_raw(t.in.data(), 1, kMapH, kMapW, pw.c1, t.a1.data(), d_a1.data(), grads.c1,
                    nullptr);
}

std::vector<Tensor*> tensors_of(DualKwsModel& m) {
  return {&m.mfcc_path.c1.w, &m.mfcc_path.c1.b, &m.mfcc_path.c2.w, &m.mfcc_path.c2.b,
          &m.mfcc_path.c3.w, &m.mfcc_path.c3.b, &m.logmel_path.c1.w, &m.logmel_path.c1.b,
          &m.logmel_path.c2.w, &m.logmel_path.c2.b, &m.logmel_path.c3.w, &m.logmel_path.c3.b,
          &m.head.w, &m.head.b};
}

std::vector<Tensor*> tensors_of(SingleKwsModel& m) {
  return {&m.path.c1.w, &m.path.c1.b, &m.path.c2.w, &m.path.c2.b,
          &m.path.c3.w, &m.path.c3.b, &m.head.w, &m.head.b};
}

std::vector<const Tensor*> tensors_of(const DualKwsModel& m) {
  auto mutable_view = tensors_of(const_cast<DualKwsModel&>(m));
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<const Tensor*> tensors_of(const SingleKwsModel& m) {
  auto mutable_view = tensors_of(const_cast<SingleKwsModel&>(m));
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(DualKwsModel& m) {
  return {{"mfcc.conv1.w", &m.mfcc_path.c1.w}, {"mfcc.conv1.b", &m.mfcc_path.c1.b},
          {"mfcc.conv2.w", &m.mfcc_path.c2.w}, {"mfcc.conv2.b", &m.mfcc_path.c2.b},
          {"mfcc.conv3.w", &m.mfcc_path.c3.w}, {"mfcc.conv3.b", &m.mfcc_path.c3.b},
          {"logmel.conv1.w", &m.logmel_path.c1.w}, {"logmel.conv1.b", &m.logmel_path.c1.b},
          {"logmel.conv2.w", &m.logmel_path.c2.w}, {"logmel.conv2.b", &m.logmel_path.c2.b},
          {"logmel.conv3.w", &m.logmel_path.c3.w}, {"logmel.conv3.b", &m.logmel_path.c3.b},
          {"head.w", &m.head.w}, {"head.b", &m.head.b}};
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(SingleKwsModel& m) {
  return {{"path.conv1.w", &m.path.c1.w}, {"path.conv1.b", &m.path.c1.b},
          {"path.conv2.w", &m.path.c2.w}, {"path.conv2.b", &m.path.c2.b},
          {"path.conv3.w", &m.path.c3.w}, {"path.conv3.b", &m.path.c3.b},
          {"head.w", &m.head.w}, {"head.b", &m.head.b}};
}

} // namespace detail

} // namespace kws
