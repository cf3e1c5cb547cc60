#include "patchlock/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "patchlock/image.hpp"

namespace patchlock {

SegmentationMap::SegmentationMap(int height_, int width_, uint8_t fill)
    : height(height_), width(width_) {
  if (height < 0 || width < 0) {
    throw InvalidArgument("segmentation map dimensions must be non-negative");
  }
  labels.assign(static_cast<size_t>(height) * width, fill);
}

ConfusionCounts::ConfusionCounts(int num_classes)
    : num_classes_(num_classes),
      tp_(num_classes, 0),
      fp_(num_classes, 0),
      fn_(num_classes, 0) {
  if (num_classes < 1 || num_classes >= kIgnoreLabel) {
    std::ostringstream os;
    os << "num_classes must be in [1, " << int(kIgnoreLabel) - 1 << "], got " << num_classes;
    throw InvalidArgument(os.str());
  }
}

void ConfusionCounts::accumulate(const SegmentationMap& pred, const SegmentationMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    std::ostringstream os;
    os << "prediction " << pred.height << "x" << pred.width << " does not match ground truth "
       << gt.height << "x" << gt.width;
    throw ShapeError(os.str());
  }
  auto check_label = [this](uint8_t label, const char* which) {
    if (label != kIgnoreLabel && label >= num_classes_) {
      std::ostringstream os;
      os << which << " label " << int(label) << " outside [0, " << num_classes_ << ")";
      throw LabelError(os.str());
    }
  };
  for (size_t i = 0; i < gt.labels.size(); ++i) {
    const uint8_t g = gt.labels[i];
    const uint8_t p = pred.labels[i];
    check_label(g, "ground truth");
    check_label(p, "prediction");
    if (g == kIgnoreLabel) continue;
    if (p == g) {
      ++tp_[g];
    } else {
      if (p != kIgnoreLabel) ++fp_[p];
      ++fn_[g];
    }
  }
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.num_classes_ != num_classes_) {
    std::ostringstream os;
    os << "cannot merge counts for " << other.num_classes_ << " classes into " << num_classes_;
    throw ShapeError(os.str());
  }
  for (int k = 0; k < num_classes_; ++k) {
    tp_[k] += other.tp_[k];
    fp_[k] += other.fp_[k];
    fn_[k] += other.fn_[k];
  }
}

IouResult mean_iou(const ConfusionCounts& cc) {
  IouResult r;
  r.per_class.resize(cc.num_classes());
  double sum = 0.0;
  int defined = 0;
  for (int k = 0; k < cc.num_classes(); ++k) {
    const uint64_t denom = cc.tp(k) + cc.fp(k) + cc.fn(k);
    if (denom == 0) continue;  // class absent everywhere; excluded from mean
    const double iou = static_cast<double>(cc.tp(k)) / static_cast<double>(denom);
    r.per_class[k] = iou;
    sum += iou;
    ++defined;
  }
  if (defined > 0) r.miou = sum / defined;
  return r;
}

std::string format_iou_table(const IouResult& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "class   IoU\n";
  for (size_t k = 0; k < r.per_class.size(); ++k) {
    os << std::setw(5) << k << "   ";
    if (r.per_class[k]) {
      os << *r.per_class[k];
    } else {
      os << "  -   ";
    }
    os << "\n";
  }
  os << " mIoU   ";
  if (r.miou) {
    os << *r.miou;
  } else {
    os << "undefined";
  }
  os << "\n";
  return os.str();
}

std::string format_iou_kv(const IouResult& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (size_t k = 0; k < r.per_class.size(); ++k) {
    os << "class " << k << " ";
    if (r.per_class[k]) {
      os << *r.per_class[k];
    } else {
      os << "undefined";
    }
    os << "\n";
  }
  os << "miou ";
  if (r.miou) {
    os << *r.miou;
  } else {
    os << "undefined";
  }
  os << "\n";
  return os.str();
}

SegmentationMap read_label_map(const std::string& path) {
  const PpmImage img = read_ppm_bytes(path);
  SegmentationMap map(img.height, img.width);
  for (size_t i = 0; i < map.labels.size(); ++i) {
    const uint8_t r = img.rgb[3 * i];
    const uint8_t g = img.rgb[3 * i + 1];
    const uint8_t b = img.rgb[3 * i + 2];
    if (r != g || g != b) {
      throw FormatError("label map pixels must have r = g = b: " + path);
    }
    map.labels[i] = r;
  }
  return map;
}

void write_label_map(const std::string& path, const SegmentationMap& map) {
  PpmImage img;
  img.height = map.height;
  img.width = map.width;
  img.rgb.resize(map.labels.size() * 3);
  for (size_t i = 0; i < map.labels.size(); ++i) {
    img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = map.labels[i];
  }
  write_ppm_bytes(path, img);
}

}  // namespace patchlock
