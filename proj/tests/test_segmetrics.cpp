#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "patchlock/metrics.hpp"

using namespace patchlock;

namespace {

SegmentationMap map_from(int h, int w, std::initializer_list<int> labels) {
  SegmentationMap m(h, w);
  int i = 0;
  for (int v : labels) m.labels[i++] = static_cast<uint8_t>(v);
  return m;
}

SegmentationMap random_map(std::mt19937& gen, int h, int w, int num_classes,
                           double ignore_prob) {
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  SegmentationMap m(h, w);
  for (auto& v : m.labels) {
    v = coin(gen) < ignore_prob ? kIgnoreLabel : static_cast<uint8_t>(cls(gen));
  }
  return m;
}

// Reference implementation: build the full class-by-class confusion matrix in
// one pass, then read tp/fp/fn off its rows and columns.
struct OracleCounts {
  std::vector<uint64_t> tp, fp, fn;
};

OracleCounts oracle_counts(const std::vector<SegmentationMap>& preds,
                           const std::vector<SegmentationMap>& gts, int num_classes) {
  // matrix[g][p] = pixels with ground truth g predicted as p; the extra column
  // collects ignore-label predictions.
  std::vector<std::vector<uint64_t>> matrix(
      num_classes, std::vector<uint64_t>(num_classes + 1, 0));
  for (size_t i = 0; i < preds.size(); ++i) {
    const auto& pred = preds[i];
    const auto& gt = gts[i];
    for (size_t j = 0; j < gt.labels.size(); ++j) {
      if (gt.labels[j] == kIgnoreLabel) continue;
      const int g = gt.labels[j];
      const int p = pred.labels[j] == kIgnoreLabel ? num_classes : pred.labels[j];
      matrix[g][p] += 1;
    }
  }
  OracleCounts out;
  out.tp.assign(num_classes, 0);
  out.fp.assign(num_classes, 0);
  out.fn.assign(num_classes, 0);
  for (int k = 0; k < num_classes; ++k) {
    out.tp[k] = matrix[k][k];
    for (int g = 0; g < num_classes; ++g)
      if (g != k) out.fp[k] += matrix[g][k];
    for (int p = 0; p <= num_classes; ++p)
      if (p != k) out.fn[k] += matrix[k][p];
  }
  return out;
}

}  // namespace

TEST_CASE("a perfect prediction counts only true positives") {
  const SegmentationMap gt = map_from(2, 5, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  ConfusionCounts cc(3);
  cc.accumulate(gt, gt);
  CHECK(cc.tp(0) == 10);
  CHECK(cc.fp(0) == 0);
  CHECK(cc.fn(0) == 0);
  const IouResult r = mean_iou(cc);
  REQUIRE(r.per_class[0].has_value());
  CHECK(*r.per_class[0] == 1.0);
  CHECK_FALSE(r.per_class[1].has_value());
  REQUIRE(r.miou.has_value());
  CHECK(*r.miou == 1.0);
}

TEST_CASE("ignore-labelled ground truth contributes nothing") {
  const SegmentationMap gt(4, 4, kIgnoreLabel);
  const SegmentationMap pred(4, 4, 2);
  ConfusionCounts cc(3);
  cc.accumulate(pred, gt);
  for (int k = 0; k < 3; ++k) {
    CHECK(cc.tp(k) == 0);
    CHECK(cc.fp(k) == 0);
    CHECK(cc.fn(k) == 0);
  }
  CHECK_FALSE(mean_iou(cc).miou.has_value());
}

TEST_CASE("ignore-labelled prediction on a counted pixel is a miss only") {
  const SegmentationMap gt = map_from(1, 1, {1});
  const SegmentationMap pred = map_from(1, 1, {kIgnoreLabel});
  ConfusionCounts cc(3);
  cc.accumulate(pred, gt);
  CHECK(cc.fn(1) == 1);
  CHECK(cc.tp(1) == 0);
  for (int k = 0; k < 3; ++k) CHECK(cc.fp(k) == 0);
}

TEST_CASE("four-pixel worked example") {
  const SegmentationMap pred = map_from(2, 2, {0, 1, 1, 2});
  const SegmentationMap gt = map_from(2, 2, {0, 1, 2, 2});
  ConfusionCounts cc(3);
  cc.accumulate(pred, gt);

  CHECK(cc.tp(0) == 1);
  CHECK(cc.fp(0) == 0);
  CHECK(cc.fn(0) == 0);
  CHECK(cc.tp(1) == 1);
  CHECK(cc.fp(1) == 1);
  CHECK(cc.fn(1) == 0);
  CHECK(cc.tp(2) == 1);
  CHECK(cc.fp(2) == 0);
  CHECK(cc.fn(2) == 1);

  const IouResult r = mean_iou(cc);
  CHECK(*r.per_class[0] == doctest::Approx(1.0));
  CHECK(*r.per_class[1] == doctest::Approx(0.5));
  CHECK(*r.per_class[2] == doctest::Approx(0.5));
  CHECK(*r.miou == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("streaming counts match the confusion-matrix oracle") {
  std::mt19937 gen(77);
  const int num_classes = 5;
  std::vector<SegmentationMap> preds, gts;
  for (int i = 0; i < 100; ++i) {
    preds.push_back(random_map(gen, 6, 7, num_classes, 0.1));
    gts.push_back(random_map(gen, 6, 7, num_classes, 0.15));
  }

  ConfusionCounts cc(num_classes);
  for (size_t i = 0; i < preds.size(); ++i) cc.accumulate(preds[i], gts[i]);

  const OracleCounts oracle = oracle_counts(preds, gts, num_classes);
  for (int k = 0; k < num_classes; ++k) {
    CHECK(cc.tp(k) == oracle.tp[k]);
    CHECK(cc.fp(k) == oracle.fp[k]);
    CHECK(cc.fn(k) == oracle.fn[k]);
  }
}

TEST_CASE("accumulation order does not change the totals") {
  std::mt19937 gen(78);
  std::vector<SegmentationMap> preds, gts;
  for (int i = 0; i < 20; ++i) {
    preds.push_back(random_map(gen, 5, 5, 4, 0.1));
    gts.push_back(random_map(gen, 5, 5, 4, 0.1));
  }

  ConfusionCounts forward(4), backward(4);
  for (size_t i = 0; i < preds.size(); ++i) forward.accumulate(preds[i], gts[i]);
  for (size_t i = preds.size(); i-- > 0;) backward.accumulate(preds[i], gts[i]);
  for (int k = 0; k < 4; ++k) {
    CHECK(forward.tp(k) == backward.tp(k));
    CHECK(forward.fp(k) == backward.fp(k));
    CHECK(forward.fn(k) == backward.fn(k));
  }
}

TEST_CASE("merge equals accumulating everything into one counter") {
  std::mt19937 gen(79);
  std::vector<SegmentationMap> preds, gts;
  for (int i = 0; i < 10; ++i) {
    preds.push_back(random_map(gen, 4, 4, 3, 0.2));
    gts.push_back(random_map(gen, 4, 4, 3, 0.2));
  }

  ConfusionCounts whole(3), left(3), right(3);
  for (size_t i = 0; i < preds.size(); ++i) {
    whole.accumulate(preds[i], gts[i]);
    (i < 5 ? left : right).accumulate(preds[i], gts[i]);
  }
  left.merge(right);
  for (int k = 0; k < 3; ++k) {
    CHECK(left.tp(k) == whole.tp(k));
    CHECK(left.fp(k) == whole.fp(k));
    CHECK(left.fn(k) == whole.fn(k));
  }
}

TEST_CASE("out-of-range labels are rejected") {
  ConfusionCounts cc(3);
  const SegmentationMap bad = map_from(1, 1, {3});
  const SegmentationMap ok = map_from(1, 1, {0});
  CHECK_THROWS_AS(cc.accumulate(bad, ok), LabelError);
  CHECK_THROWS_AS(cc.accumulate(ok, bad), LabelError);
  CHECK_THROWS_AS(cc.accumulate(ok, map_from(1, 2, {0, 0})), ShapeError);
  CHECK_THROWS_AS(ConfusionCounts(0), InvalidArgument);
  CHECK_THROWS_AS(ConfusionCounts(255), InvalidArgument);
}

TEST_CASE("an untouched accumulator yields an undefined mean") {
  const IouResult r = mean_iou(ConfusionCounts(4));
  CHECK_FALSE(r.miou.has_value());
  for (const auto& v : r.per_class) CHECK_FALSE(v.has_value());
  CHECK(format_iou_kv(r).find("miou undefined") != std::string::npos);
}

TEST_CASE("undefined classes are excluded from the mean") {
  // Class 2 never appears; the mean covers classes 0 and 1 only.
  const SegmentationMap pred = map_from(1, 4, {0, 0, 1, 1});
  const SegmentationMap gt = map_from(1, 4, {0, 1, 1, 1});
  ConfusionCounts cc(3);
  cc.accumulate(pred, gt);
  const IouResult r = mean_iou(cc);
  CHECK_FALSE(r.per_class[2].has_value());
  // class 0: tp=1 fp=1 fn=0 -> 0.5; class 1: tp=2 fp=0 fn=1 -> 2/3
  CHECK(*r.miou == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("formatted output carries every class") {
  const SegmentationMap pred = map_from(2, 2, {0, 1, 1, 2});
  const SegmentationMap gt = map_from(2, 2, {0, 1, 2, 2});
  ConfusionCounts cc(4);
  cc.accumulate(pred, gt);
  const std::string kv = format_iou_kv(mean_iou(cc));
  CHECK(kv.find("class 0 1\n") != std::string::npos);
  CHECK(kv.find("class 3 undefined") != std::string::npos);
  CHECK(kv.find("miou 0.6666") != std::string::npos);
  const std::string table = format_iou_table(mean_iou(cc));
  CHECK(table.find("mIoU") != std::string::npos);
}

TEST_CASE("label maps survive the file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "patchlock_metrics_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "labels.ppm").string();

  std::mt19937 gen(80);
  SegmentationMap m = random_map(gen, 9, 7, 4, 0.1);
  m.at(0, 0) = kIgnoreLabel;  // the ignore label must survive too
  write_label_map(path, m);
  const SegmentationMap back = read_label_map(path);
  CHECK(back.height == m.height);
  CHECK(back.width == m.width);
  CHECK(back.labels == m.labels);
}

TEST_CASE("label maps with unequal colour channels are refused") {
  const auto dir = std::filesystem::temp_directory_path() / "patchlock_metrics_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "not_labels.ppm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n2 1\n255\n";
    const unsigned char pixels[6] = {1, 2, 3, 0, 0, 0};  // r != g != b
    out.write(reinterpret_cast<const char*>(pixels), 6);
  }
  CHECK_THROWS_AS(read_label_map(path), FormatError);
}
