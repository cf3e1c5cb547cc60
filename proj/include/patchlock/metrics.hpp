#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "patchlock/error.hpp"

namespace patchlock {

// Pixels carrying this label are excluded from all counts.
constexpr uint8_t kIgnoreLabel = 255;

// Per-pixel class labels; values in [0, num_classes) or kIgnoreLabel.
struct SegmentationMap {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> labels;

  SegmentationMap() = default;
  SegmentationMap(int height, int width, uint8_t fill = 0);

  uint8_t& at(int r, int c) { return labels[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return labels[static_cast<size_t>(r) * width + c]; }
};

// Streaming per-class true/false positive and false negative counters.
class ConfusionCounts {
 public:
  explicit ConfusionCounts(int num_classes);

  // Pixels whose ground truth is the ignore label contribute nothing. A
  // prediction of the ignore label on a counted pixel yields only a false
  // negative for the true class.
  void accumulate(const SegmentationMap& pred, const SegmentationMap& gt);

  // Elementwise sum; lets per-image counts be computed in parallel and reduced.
  void merge(const ConfusionCounts& other);

  int num_classes() const { return num_classes_; }
  uint64_t tp(int k) const { return tp_[k]; }
  uint64_t fp(int k) const { return fp_[k]; }
  uint64_t fn(int k) const { return fn_[k]; }

 private:
  int num_classes_;
  std::vector<uint64_t> tp_, fp_, fn_;
};

struct IouResult {
  // IoU per class; empty optional when the class never appears in prediction
  // or ground truth (tp + fp + fn = 0).
  std::vector<std::optional<double>> per_class;
  // Mean over the defined classes; empty when no class is defined.
  std::optional<double> miou;
};

IouResult mean_iou(const ConfusionCounts& cc);

// Line-oriented text table for humans.
std::string format_iou_table(const IouResult& r);
// Machine-readable dump: "class <id> <iou|undefined>" lines plus "miou ...".
std::string format_iou_kv(const IouResult& r);

// Label maps ride in P6 PPM files with r = g = b = class id.
SegmentationMap read_label_map(const std::string& path);
void write_label_map(const std::string& path, const SegmentationMap& map);

}  // namespace patchlock
