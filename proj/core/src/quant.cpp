#include "kws/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "binio.hpp"

namespace kws {

namespace {

struct RangeTracker {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(float v) {
    lo = std::min(lo, double(v));
    hi = std::max(hi, double(v));
  }
  template <size_t N>
  void add(const std::array<float, N>& vals) {
    for (float v : vals) add(v);
  }
  QuantParams params() const { return affine_params_from_range(lo, hi); }
};

struct PathTrackers {
  RangeTracker input, conv1, conv2;
};

void track_path(const PathWeights& pw, const FeatureMap& map, PathTrackers& pt,
                RangeTracker& latent) {
  detail::PathTrace t;
  detail::path_forward(pw, map.v.data(), t);
  pt.input.add(map.v);
  pt.conv1.add(t.a1);
  pt.conv2.add(t.a2);
  latent.add(t.a3);
}

std::pair<std::vector<int8_t>, double> quantize_weights(const Tensor& t) {
  double maxabs = 0.0;
  for (float w : t.v) maxabs = std::max(maxabs, std::abs(double(w)));
  const double scale = std::max(maxabs / 127.0, 1e-6);
  std::vector<int8_t> q(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) q[i] = sat_i8(round_half_away(t.v[i] / scale));
  return {std::move(q), scale};
}

QConv quantize_conv(const ConvLayer& layer, QuantParams in_site, QuantParams out_site) {
  QConv q;
  q.in_c = layer.in_c;
  q.out_c = layer.out_c;
  std::tie(q.w, q.w_scale) = quantize_weights(layer.w);
  q.in_site = in_site;
  q.out_site = out_site;
  const double bias_scale = in_site.scale * q.w_scale;
  q.bias.resize(size_t(layer.out_c));
  for (int oc = 0; oc < layer.out_c; ++oc) {
    q.bias[size_t(oc)] = int32_t(round_half_away(layer.b.v[size_t(oc)] / bias_scale));
  }
  q.requant = quantize_multiplier(bias_scale / out_site.scale);
  return q;
}

ConvLayer dequantize_conv(const QConv& q) {
  ConvLayer l;
  l.in_c = q.in_c;
  l.out_c = q.out_c;
  l.w = Tensor::zeros({q.out_c, q.in_c, kKernel, kKernel});
  l.b = Tensor::zeros({q.out_c});
  for (size_t i = 0; i < q.w.size(); ++i) l.w.v[i] = float(q.w_scale * q.w[i]);
  const double bias_scale = q.in_site.scale * q.w_scale;
  for (int oc = 0; oc < q.out_c; ++oc) l.b.v[size_t(oc)] = float(bias_scale * q.bias[size_t(oc)]);
  return l;
}

QPath quantize_path(const PathWeights& pw, const PathSites& sites, QuantParams latent) {
  QPath p;
  p.c1 = quantize_conv(pw.c1, sites.input, sites.conv1);
  p.c2 = quantize_conv(pw.c2, sites.conv1, sites.conv2);
  p.c3 = quantize_conv(pw.c3, sites.conv2, latent);
  return p;
}

PathWeights dequantize_path(const QPath& p) {
  PathWeights pw;
  pw.c1 = dequantize_conv(p.c1);
  pw.c2 = dequantize_conv(p.c2);
  pw.c3 = dequantize_conv(p.c3);
  return pw;
}

std::array<int8_t, kSigmoidLutSize> build_sigmoid_lut() {
  std::array<int8_t, kSigmoidLutSize> lut{};
  for (int i = 0; i < kSigmoidLutSize; ++i) {
    const double z = (i - kSigmoidLutSize / 2) / 256.0;
    const double p = 1.0 / (1.0 + std::exp(-z));
    lut[size_t(i)] = sat_i8(round_half_away(p * 256.0) - 128);
  }
  return lut;
}

QDense quantize_head(const DenseLayer& head, QuantParams latent_site) {
  QDense q;
  q.in = head.in;
  std::tie(q.w, q.w_scale) = quantize_weights(head.w);
  q.in_site = latent_site;
  const double bias_scale = latent_site.scale * q.w_scale;
  q.bias = int32_t(round_half_away(head.b.v[0] / bias_scale));
  q.requant = quantize_multiplier(bias_scale / (1.0 / 256.0));
  return q;
}

DenseLayer dequantize_head(const QDense& q) {
  DenseLayer l;
  l.in = q.in;
  l.w = Tensor::zeros({q.in});
  l.b = Tensor::zeros({1});
  for (size_t i = 0; i < q.w.size(); ++i) l.w.v[i] = float(q.w_scale * q.w[i]);
  l.b.v[0] = float(q.in_site.scale * q.w_scale * q.bias);
  return l;
}

void quantize_map(const FeatureMap& map, QuantParams site, int8_t* out) {
  for (size_t i = 0; i < map.v.size(); ++i) {
    out[i] = sat_i8(site.zero_point + round_half_away(map.v[i] / site.scale));
  }
}

// Integer valid 5x5 conv with ReLU; out values on the l.out_site grid.
void qconv_forward(const int8_t* in, int h, int w, const QConv& l, int8_t* out) {
  const int oh = h - kKernel + 1;
  const int ow = w - kKernel + 1;
  const int32_t zp_in = l.in_site.zero_point;
  const int32_t zp_out = l.out_site.zero_point;
  for (int oc = 0; oc < l.out_c; ++oc) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        int32_t acc = l.bias[size_t(oc)];
        for (int ic = 0; ic < l.in_c; ++ic) {
          const int8_t* ip = in + (ic * h + y) * w + x;
          const int8_t* wp = l.w.data() + size_t((oc * l.in_c + ic) * kKernel * kKernel);
          for (int u = 0; u < kKernel; ++u) {
            for (int v = 0; v < kKernel; ++v) {
              acc += (int32_t(ip[u * w + v]) - zp_in) * int32_t(wp[u * kKernel + v]);
            }
          }
        }
        int32_t q = zp_out + fixed_point_mul(acc, l.requant);
        q = std::max(q, zp_out); // ReLU on the quantized grid
        out[(oc * oh + y) * ow + x] = sat_i8(q);
      }
    }
  }
}

// Per path: 20x16 -> conv1 -> 16x12 -> conv2 -> 12x8 -> conv3 -> 8x4 latent.
void qpath_forward(const QPath& p, const int8_t* in, int8_t* latent_out) {
  std::array<int8_t, 960> a1;
  std::array<int8_t, 192> a2;
  qconv_forward(in, kNumBands, kFeatureCols, p.c1, a1.data());
  qconv_forward(a1.data(), 16, 12, p.c2, a2.data());
  qconv_forward(a2.data(), 12, 8, p.c3, latent_out);
}

constexpr char kQCkptMagic[8] = {'K', 'W', 'S', 'Q', 'C', 'K', 'P', '1'};

void write_site(std::ostream& out, QuantParams p) {
  binio::write_f64(out, p.scale);
  binio::write_i32(out, p.zero_point);
}

QuantParams read_site(std::istream& in) {
  QuantParams p;
  p.scale = binio::read_f64(in);
  p.zero_point = binio::read_i32(in);
  return p;
}

void write_qconv(std::ostream& out, const QConv& c) {
  binio::write_u8(out, uint8_t(c.in_c));
  binio::write_u8(out, uint8_t(c.out_c));
  out.write(reinterpret_cast<const char*>(c.w.data()), std::streamsize(c.w.size()));
  binio::write_f64(out, c.w_scale);
  for (int32_t b : c.bias) binio::write_i32(out, b);
  write_site(out, c.in_site);
  write_site(out, c.out_site);
}

QConv read_qconv(std::istream& in) {
  QConv c;
  c.in_c = binio::read_u8(in);
  c.out_c = binio::read_u8(in);
  c.w.resize(size_t(c.in_c * c.out_c * kKernel * kKernel));
  in.read(reinterpret_cast<char*>(c.w.data()), std::streamsize(c.w.size()));
  if (!in) fail(ErrorKind::Format, "truncated conv weights");
  c.w_scale = binio::read_f64(in);
  c.bias.resize(size_t(c.out_c));
  for (int32_t& b : c.bias) b = binio::read_i32(in);
  c.in_site = read_site(in);
  c.out_site = read_site(in);
  c.requant = quantize_multiplier(c.in_site.scale * c.w_scale / c.out_site.scale);
  return c;
}

void write_artifacts(std::ostream& out, const ClassArtifacts& a) {
  binio::write_u8(out, uint8_t(a.class_id));
  binio::write_u16(out, uint16_t(a.prototype.size()));
  for (float v : a.prototype) binio::write_f32(out, v);
  binio::write_f64(out, a.mean_dist);
  binio::write_f64(out, a.std_dist);
  binio::write_f64(out, a.n_sigma);
  binio::write_f64(out, a.threshold);
}

ClassArtifacts read_artifacts(std::istream& in) {
  ClassArtifacts a;
  a.class_id = Label(binio::read_u8(in));
  a.prototype.resize(binio::read_u16(in));
  for (float& v : a.prototype) v = binio::read_f32(in);
  a.mean_dist = binio::read_f64(in);
  a.std_dist = binio::read_f64(in);
  a.n_sigma = binio::read_f64(in);
  a.threshold = binio::read_f64(in);
  return a;
}

} // namespace

QuantParams affine_params_from_range(double min_v, double max_v) {
  double lo = min_v, hi = max_v;
  if (hi == lo) { // degenerate range: anchor at zero
    lo = std::min(0.0, lo);
    hi = std::max(0.0, hi);
  }
  QuantParams p;
  p.scale = std::max((hi - lo) / 255.0, 1e-6);
  const int64_t zp = round_half_away(-128.0 - lo / p.scale);
  p.zero_point = int32_t(std::clamp<int64_t>(zp, -128, 127));
  return p;
}

CalibrationResult calibrate(const DualKwsModel& model, std::span<const FeaturePair> batch) {
  if (batch.size() < 16)
    fail(ErrorKind::Calibration, "need >= 16 calibration samples, got " +
                                     std::to_string(batch.size()));
  PathTrackers mfcc, logmel;
  RangeTracker latent;
  for (const FeaturePair& pair : batch) {
    track_path(model.mfcc_path, pair.mfcc, mfcc, latent);
    track_path(model.logmel_path, pair.logmel, logmel, latent);
  }
  CalibrationResult r;
  r.paths = {{mfcc.input.params(), mfcc.conv1.params(), mfcc.conv2.params()},
             {logmel.input.params(), logmel.conv1.params(), logmel.conv2.params()}};
  r.latent = latent.params();
  return r;
}

CalibrationResult calibrate(const SingleKwsModel& model, std::span<const FeaturePair> batch) {
  if (batch.size() < 16)
    fail(ErrorKind::Calibration, "need >= 16 calibration samples, got " +
                                     std::to_string(batch.size()));
  PathTrackers path;
  RangeTracker latent;
  for (const FeaturePair& pair : batch) track_path(model.path, pair.mfcc, path, latent);
  CalibrationResult r;
  r.paths = {{path.input.params(), path.conv1.params(), path.conv2.params()}};
  r.latent = latent.params();
  return r;
}

FixedPointMult quantize_multiplier(double m) {
  if (!(m > 0.0)) fail(ErrorKind::Usage, "multiplier must be positive");
  int exp = 0;
  const double f = std::frexp(m, &exp); // m = f * 2^exp, f in [0.5, 1)
  int64_t mult = round_half_away(f * double(int64_t(1) << 31));
  int shift = 31 - exp;
  if (mult == (int64_t(1) << 31)) {
    mult >>= 1;
    --shift;
  }
  if (shift < 0 || shift > 62) fail(ErrorKind::Usage, "multiplier out of range");
  return {int32_t(mult), shift};
}

int32_t fixed_point_mul(int32_t x, FixedPointMult m) {
  const int64_t prod = int64_t(x) * int64_t(m.mult);
  if (m.shift == 0) return int32_t(prod);
  const int64_t half = int64_t(1) << (m.shift - 1);
  const int64_t r = prod >= 0 ? (prod + half) >> m.shift : -((-prod + half) >> m.shift);
  return int32_t(r);
}

QuantizedModel quantize_model(const DualKwsModel& model, const CalibrationResult& calib) {
  if (calib.paths.size() != 2) fail(ErrorKind::Shape, "dual model needs 2 calibrated paths");
  QuantizedModel qm;
  qm.arch = kDualArchTag;
  qm.latent_site = calib.latent;
  qm.paths.push_back(quantize_path(model.mfcc_path, calib.paths[0], calib.latent));
  qm.paths.push_back(quantize_path(model.logmel_path, calib.paths[1], calib.latent));
  qm.head = quantize_head(model.head, calib.latent);
  qm.sigmoid_lut = build_sigmoid_lut();
  return qm;
}

QuantizedModel quantize_model(const SingleKwsModel& model, const CalibrationResult& calib) {
  if (calib.paths.size() != 1) fail(ErrorKind::Shape, "single model needs 1 calibrated path");
  QuantizedModel qm;
  qm.arch = kSingleArchTag;
  qm.latent_site = calib.latent;
  qm.paths.push_back(quantize_path(model.path, calib.paths[0], calib.latent));
  qm.head = quantize_head(model.head, calib.latent);
  qm.sigmoid_lut = build_sigmoid_lut();
  return qm;
}

DualKwsModel dequantize_dual(const QuantizedModel& qm) {
  if (qm.arch != kDualArchTag) fail(ErrorKind::Shape, "not a dual quantized model");
  DualKwsModel m;
  m.mfcc_path = dequantize_path(qm.paths[0]);
  m.logmel_path = dequantize_path(qm.paths[1]);
  m.head = dequantize_head(qm.head);
  return m;
}

SingleKwsModel dequantize_single(const QuantizedModel& qm) {
  if (qm.arch != kSingleArchTag) fail(ErrorKind::Shape, "not a single quantized model");
  SingleKwsModel m;
  m.path = dequantize_path(qm.paths[0]);
  m.head = dequantize_head(qm.head);
  return m;
}

QuantInference quantized_inference(const QuantizedModel& qm, const FeaturePair& pair) {
  QuantInference out;
  out.latent_q.resize(size_t(qm.latent_len()));

  std::array<int8_t, kFeatureSize> qin;
  for (size_t p = 0; p < qm.paths.size(); ++p) {
    const FeatureMap& map = (qm.paths.size() == 2 && p == 1) ? pair.logmel : pair.mfcc;
    quantize_map(map, qm.paths[p].c1.in_site, qin.data());
    qpath_forward(qm.paths[p], qin.data(), out.latent_q.data() + p * kPathLatent);
  }

  const QDense& head = qm.head;
  int32_t acc = head.bias;
  const int32_t zp = head.in_site.zero_point;
  for (int i = 0; i < head.in; ++i) {
    acc += (int32_t(out.latent_q[size_t(i)]) - zp) * int32_t(head.w[size_t(i)]);
  }
  int32_t z = fixed_point_mul(acc, head.requant);
  z = std::clamp(z, -kSigmoidLutSize / 2, kSigmoidLutSize / 2 - 1);
  out.prob_q = qm.sigmoid_lut[size_t(z + kSigmoidLutSize / 2)];

  const int p_units = int(out.prob_q) + 128;     // p in 1/256 units
  out.confidence_q = std::min(std::max(p_units, 256 - p_units), 255);
  out.predicted = out.prob_q > 0 ? Label::Yes : Label::No;
  return out;
}

std::vector<float> dequantize_latent(const QuantizedModel& qm, std::span<const int8_t> latent_q) {
  std::vector<float> out(latent_q.size());
  for (size_t i = 0; i < latent_q.size(); ++i) {
    out[i] = float(qm.latent_site.scale * (int32_t(latent_q[i]) - qm.latent_site.zero_point));
  }
  return out;
}

int confidence_threshold_from_prob(double p) {
  return int(std::ceil(p * 255.0 - 1e-9));
}

void save_quantized_checkpoint(const std::filesystem::path& path, const QuantizedModel& qm,
                               const ArtifactSet* artifacts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out.write(kQCkptMagic, 8);
  binio::write_u32(out, 1);
  binio::write_str(out, qm.arch);
  binio::write_u8(out, uint8_t(qm.paths.size()));
  for (const QPath& p : qm.paths) {
    write_qconv(out, p.c1);
    write_qconv(out, p.c2);
    write_qconv(out, p.c3);
  }
  binio::write_u16(out, uint16_t(qm.head.in));
  out.write(reinterpret_cast<const char*>(qm.head.w.data()),
            std::streamsize(qm.head.w.size()));
  binio::write_f64(out, qm.head.w_scale);
  binio::write_i32(out, qm.head.bias);
  write_site(out, qm.head.in_site);
  write_site(out, qm.latent_site);
  binio::write_u8(out, artifacts ? 1 : 0);
  if (artifacts) {
    write_artifacts(out, artifacts->yes);
    write_artifacts(out, artifacts->no);
  }
  if (!out) fail(ErrorKind::State, "write failed: " + path.string());
}

QuantizedCheckpoint load_quantized_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::State, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kQCkptMagic, 8) != 0)
    fail(ErrorKind::Format, "not a quantized checkpoint: " + path.string());
  if (binio::read_u32(in) != 1) fail(ErrorKind::Format, "unsupported quantized version");

  QuantizedCheckpoint ck;
  ck.model.arch = binio::read_str(in);
  if (ck.model.arch != kDualArchTag && ck.model.arch != kSingleArchTag)
    fail(ErrorKind::Format, "unknown architecture tag: " + ck.model.arch);
  const uint8_t n_paths = binio::read_u8(in);
  for (int p = 0; p < n_paths; ++p) {
    QPath path_q;
    path_q.c1 = read_qconv(in);
    path_q.c2 = read_qconv(in);
    path_q.c3 = read_qconv(in);
    ck.model.paths.push_back(std::move(path_q));
  }
  ck.model.head.in = binio::read_u16(in);
  ck.model.head.w.resize(size_t(ck.model.head.in));
  in.read(reinterpret_cast<char*>(ck.model.head.w.data()),
          std::streamsize(ck.model.head.w.size()));
  if (!in) fail(ErrorKind::Format, "truncated head weights");
  ck.model.head.w_scale = binio::read_f64(in);
  ck.model.head.bias = binio::read_i32(in);
  ck.model.head.in_site = read_site(in);
  ck.model.latent_site = read_site(in);
  ck.model.head.requant =
      quantize_multiplier(ck.model.head.in_site.scale * ck.model.head.w_scale / (1.0 / 256.0));
  ck.model.sigmoid_lut = build_sigmoid_lut();
  if (binio::read_u8(in) == 1) {
    ArtifactSet set;
    set.yes = read_artifacts(in);
    set.no = read_artifacts(in);
    ck.artifacts = std::move(set);
  }
  return ck;
}

} // namespace kws
