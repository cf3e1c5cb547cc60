#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchlock/image.hpp"
#include "patchlock/key.hpp"
#include "patchlock/matrix.hpp"
#include "patchlock/metrics.hpp"
#include "patchlock/protect.hpp"

namespace patchlock {

// Desk-scale segmentation model: the protected patch embedding followed by a
// per-patch two-layer head that emits class logits for every pixel of the
// patch.
struct ToyModel {
  PatchEmbedWeights embed;
  Matrix head_w1;                 // D x H
  std::vector<double> head_b1;    // H
  Matrix head_w2;                 // H x (p^2 C)
  std::vector<double> head_b2;    // p^2 C
  int hidden = 0;
  int num_classes = 0;

  void validate() const;
};

struct TrainConfig {
  int iterations = 2000;
  int batch_size = 8;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double poly_power = 0.9;
  uint64_t seed = 1;
  // Model geometry.
  int patch_size = 4;
  int embed_dim = 32;
  int hidden = 64;
  int num_classes = 4;
};

// Synthetic segmentation data: 32x32 RGB images of colored rectangles and
// discs over a noisy gray background. Class 0 is background; classes 1-3
// are identified by their paint color.
struct SyntheticSample {
  ImageTensor image;        // 32x32x3
  SegmentationMap labels;   // 32x32
};

constexpr int kSampleSize = 32;
constexpr int kSampleChannels = 3;
constexpr int kSyntheticClasses = 4;

// Deterministic per (seed, index): sample i is the same whatever n is.
std::vector<SyntheticSample> gen_dataset(uint64_t seed, int n);

// Per-pixel class logits as an h x w x num_classes tensor.
ImageTensor forward(const ToyModel& m, const ImageTensor& x);

// Argmax over the class channel; ties resolve to the lowest class id.
SegmentationMap argmax_map(const ImageTensor& logits);

struct ModelGradients {
  Matrix embedding, position;
  Matrix head_w1, head_w2;
  std::vector<double> head_b1, head_b2;
};

struct LossAndGrads {
  double loss = 0.0;
  ModelGradients grads;
};

// Mean softmax cross-entropy over non-ignored pixels of the batch, with
// analytic gradients for every parameter.
LossAndGrads loss_and_grads(const ToyModel& m, std::span<const SyntheticSample> batch);

// lr0 * (1 - t/total)^power; lr0 at t = 0, zero at t = total.
double poly_lr(double lr0, int t, int total, double power);

ToyModel init_model(const TrainConfig& cfg, int image_height, int image_width);

// SGD with momentum under the polynomial decay schedule. Deterministic for a
// fixed config and dataset.
ToyModel train(const TrainConfig& cfg, std::span<const SyntheticSample> data);

// mIoU of the model over a dataset. When image_key is non-null every image
// is encrypted with it first (the authorized-user path when the model is
// encrypted, the attacker path when the keys differ).
IouResult evaluate_model(const ToyModel& m, std::span<const SyntheticSample> data,
                         const KeyMaterial* image_key = nullptr);

// Checkpoint: the "PLW1" embedding block followed by a "PLH1" head block
// (magic, u32 LE hidden and num_classes, f64 LE w1, b1, w2, b2).
void write_model(const std::string& path, const ToyModel& m);
ToyModel read_model(const std::string& path);

// Dataset cache: a directory of image_NNNN.plt tensors plus labels_NNNN.ppm
// label maps.
void write_dataset(const std::string& dir, std::span<const SyntheticSample> samples);
std::vector<SyntheticSample> read_dataset(const std::string& dir);

}  // namespace patchlock
