// Tensor math, the single- and dual-feature CNN architectures, forward and
// backward passes, BCE loss, and the float training loop.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/features.hpp"

namespace kws {

struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  static Tensor zeros(std::vector<int> shape);
  int64_t size() const { return int64_t(v.size()); }
};

inline constexpr int kKernel = 5;
// Spatial chain per path: 20x16 -> 16x12 -> 12x8 -> 8x4, channels 1->5->2->5.
inline constexpr int kConv1Channels = 5;
inline constexpr int kConv2Channels = 2;
inline constexpr int kConv3Channels = 5;
inline constexpr int kPathLatent = 160;  // 5 * 8 * 4
inline constexpr int kDualLatent = 320;

// Valid (no padding) 5x5 cross-correlation with per-channel bias and ReLU.
struct ConvLayer {
  int in_c = 1;
  int out_c = 1;
  Tensor w; // [out_c, in_c, 5, 5]
  Tensor b; // [out_c]
};

struct DenseLayer {
  int in = 0;
  Tensor w; // [in], single output unit
  Tensor b; // [1]
};

struct PathWeights {
  ConvLayer c1, c2, c3;
};

struct DualKwsModel {
  PathWeights mfcc_path, logmel_path;
  DenseLayer head; // 320 -> 1, sigmoid
};

struct SingleKwsModel {
  PathWeights path; // driven by the MFCC map
  DenseLayer head;  // 160 -> 1, sigmoid
};

// Glorot-uniform weights, zero biases, deterministic per seed.
DualKwsModel make_dual_model(uint64_t seed);
SingleKwsModel make_single_model(uint64_t seed);

int64_t param_count(const ConvLayer& l);
int64_t param_count(const PathWeights& p);
int64_t param_count(const DualKwsModel& m); // 1595
int64_t param_count(const SingleKwsModel& m); // 798

// Generic conv op on [C,H,W] tensors; used by tests and small tools.
Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer, bool relu);

struct ForwardResult {
  float prob = 0.0f;
  std::vector<float> latent; // concatenated flatten output (pre-dense)
};

ForwardResult forward(const DualKwsModel& model, const FeaturePair& pair);
ForwardResult forward(const SingleKwsModel& model, const FeaturePair& pair);

float target_of(Label label); // Yes -> 1, No -> 0
Label label_of(float prob);   // prob > 0.5 -> Yes

struct BackwardResult {
  float loss = 0.0f;
  float prob = 0.0f;
};

// Exact gradients of BCE(sigmoid(dense(latent)), target) accumulated into
// `grads` (same shapes as the model).
BackwardResult backward_accumulate(const DualKwsModel& model, const FeaturePair& pair,
                                   float target, DualKwsModel& grads);
BackwardResult backward_accumulate(const SingleKwsModel& model, const FeaturePair& pair,
                                   float target, SingleKwsModel& grads);

DualKwsModel zero_like(const DualKwsModel& m);
SingleKwsModel zero_like(const SingleKwsModel& m);

struct TrainConfig {
  float learning_rate = 0.001f;
  int epochs = 5;      // full passes over the batch
  int batch_size = 16; // minibatch size; 0 means the whole batch per step
  uint64_t seed = 0;
  enum class Optimizer { GradientDescent, Adam } optimizer = Optimizer::GradientDescent;
  bool fake_quant_weights = false; // straight-through fake quantization of weights
};

struct TrainReport {
  std::vector<float> epoch_loss;
  bool single_class_batch = false;
};

// Seeded minibatch gradient descent over labeled pairs (targets from the
// pair labels). Deterministic per seed.
TrainReport train(DualKwsModel& model, std::span<const FeaturePair> batch,
                  const TrainConfig& cfg);
TrainReport train(SingleKwsModel& model, std::span<const FeaturePair> batch,
                  const TrainConfig& cfg);

float bce_loss(float prob, float target);

// Self-describing little-endian checkpoint container (docs/FORMATS.md).
inline constexpr const char* kDualArchTag = "kws-dual-v1";
inline constexpr const char* kSingleArchTag = "kws-single-v1";

void save_checkpoint(const std::filesystem::path& path, const DualKwsModel& model);
void save_checkpoint(const std::filesystem::path& path, const SingleKwsModel& model);
std::string checkpoint_arch(const std::filesystem::path& path);
DualKwsModel load_dual_checkpoint(const std::filesystem::path& path);
SingleKwsModel load_single_checkpoint(const std::filesystem::path& path);

namespace detail {

struct PathTrace {
  std::array<float, kFeatureSize> in{};
  std::array<float, 960> a1{}; // 5 x 16 x 12
  std::array<float, 192> a2{}; // 2 x 12 x 8
  std::array<float, 160> a3{}; // 5 x 8 x 4
};

void path_forward(const PathWeights& pw, const float* in, PathTrace& t);
void path_backward(const PathWeights& pw, const PathTrace& t, const double* d_a3,
                   PathWeights& grads);

std::vector<Tensor*> tensors_of(DualKwsModel& m);
std::vector<Tensor*> tensors_of(SingleKwsModel& m);
std::vector<const Tensor*> tensors_of(const DualKwsModel& m);
std::vector<const Tensor*> tensors_of(const SingleKwsModel& m);
std::vector<std::pair<std::string, Tensor*>> named_tensors(DualKwsModel& m);
std::vector<std::pair<std::string, Tensor*>> named_tensors(SingleKwsModel& m);

} // namespace detail

} // namespace kws
