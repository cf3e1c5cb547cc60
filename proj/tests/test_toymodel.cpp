#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <utility>
#include <vector>

#include "patchlock/model.hpp"

using namespace patchlock;

namespace {

// All-zero model of the given geometry; handy as a fixed point for forward
// examples because every logit comes out zero.
ToyModel zero_model(int p, int d, int hidden, int classes, int image_side) {
  const int grid = image_side / p;
  ToyModel m;
  m.embed.patch_size = p;
  m.embed.channels = kSampleChannels;
  m.embed.embed_dim = d;
  m.embed.embedding = Matrix(p * p * kSampleChannels, d);
  m.embed.position = Matrix(grid * grid, d);
  m.head_w1 = Matrix(d, hidden);
  m.head_b1.assign(hidden, 0.0);
  m.head_w2 = Matrix(hidden, p * p * classes);
  m.head_b2.assign(p * p * classes, 0.0);
  m.hidden = hidden;
  m.num_classes = classes;
  return m;
}

SyntheticSample flat_sample(uint8_t label) {
  SyntheticSample s;
  s.image = ImageTensor(kSampleSize, kSampleSize, kSampleChannels);
  s.labels = SegmentationMap(kSampleSize, kSampleSize, label);
  return s;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("dataset generation is deterministic and prefix-stable") {
  const auto a = gen_dataset(11, 6);
  const auto b = gen_dataset(11, 6);
  REQUIRE(a.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(a[i].image.data == b[i].image.data);
    CHECK(a[i].labels.labels == b[i].labels.labels);
  }

  // Sample i does not depend on how many samples were requested.
  const auto prefix = gen_dataset(11, 2);
  CHECK(prefix[1].image.data == a[1].image.data);
  CHECK(prefix[1].labels.labels == a[1].labels.labels);

  // A different seed gives different pixels.
  const auto other = gen_dataset(12, 1);
  CHECK(other[0].image.data != a[0].image.data);
}

TEST_CASE("generated samples are well-formed") {
  const auto data = gen_dataset(3, 100);
  for (const auto& s : data) {
    REQUIRE(s.image.height == kSampleSize);
    REQUIRE(s.image.width == kSampleSize);
    REQUIRE(s.image.channels == kSampleChannels);
    int background = 0;
    bool shapes = false;
    for (const uint8_t v : s.labels.labels) {
      REQUIRE(v < kSyntheticClasses);
      if (v == 0) ++background;
      else shapes = true;
    }
    // Background stays the majority class so a trained model cannot win by
    // ignoring the shapes.
    CHECK(background * 2 > kSampleSize * kSampleSize);
    CHECK(shapes);  // every sample carries at least one shape
    for (const double v : s.image.data) {
      REQUIRE(std::isfinite(v));
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("an empty dataset request is rejected") {
  CHECK_THROWS_AS(gen_dataset(1, 0), InvalidArgument);
  CHECK_THROWS_AS(gen_dataset(1, -3), InvalidArgument);
}

TEST_CASE("the zero model predicts class 0 everywhere") {
  const ToyModel m = zero_model(4, 8, 8, 4, kSampleSize);
  const SyntheticSample s = flat_sample(0);
  const ImageTensor logits = forward(m, s.image);
  REQUIRE(logits.height == kSampleSize);
  REQUIRE(logits.channels == 4);
  for (const double v : logits.data) CHECK(v == 0.0);
  const SegmentationMap pred = argmax_map(logits);
  for (const uint8_t v : pred.labels) CHECK(v == 0);  // ties resolve downward
}

TEST_CASE("argmax picks the largest channel and breaks ties low") {
  ImageTensor logits(1, 2, 3);
  logits.at(0, 0, 0) = 0.1;
  logits.at(0, 0, 1) = 0.7;
  logits.at(0, 0, 2) = 0.3;
  logits.at(0, 1, 0) = 0.5;
  logits.at(0, 1, 1) = 0.5;
  logits.at(0, 1, 2) = 0.2;
  const SegmentationMap pred = argmax_map(logits);
  CHECK(pred.at(0, 0) == 1);
  CHECK(pred.at(0, 1) == 0);
}

TEST_CASE("doubling the output layer doubles the logits") {
  TrainConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 40;
  ToyModel m = init_model(cfg, kSampleSize, kSampleSize);
  std::fill(m.head_b2.begin(), m.head_b2.end(), 0.0);
  const ImageTensor x = gen_dataset(41, 1)[0].image;

  const ImageTensor base = forward(m, x);
  for (double& v : m.head_w2.data) v *= 2.0;
  const ImageTensor doubled = forward(m, x);
  for (size_t i = 0; i < base.data.size(); ++i) {
    CHECK(doubled.data[i] == doctest::Approx(2.0 * base.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward pass matches a scalar-loop oracle") {
  TrainConfig cfg;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 42;
  const ToyModel m = init_model(cfg, kSampleSize, kSampleSize);
  const ImageTensor x = gen_dataset(43, 1)[0].image;
  const ImageTensor logits = forward(m, x);

  const int p = cfg.patch_size, d = cfg.embed_dim, hd = cfg.hidden, cls = cfg.num_classes;
  const int grid = kSampleSize / p;
  double worst = 0.0;
  for (int br = 0; br < grid; ++br) {
    for (int bc = 0; bc < grid; ++bc) {
      const int patch = br * grid + bc;
      // z0 = flattened patch * E + position row
      std::vector<double> z0(d);
      for (int j = 0; j < d; ++j) {
        double acc = m.embed.position(patch, j);
        int k = 0;
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc)
            for (int ch = 0; ch < kSampleChannels; ++ch, ++k)
              acc += x.at(br * p + pr, bc * p + pc, ch) * m.embed.embedding(k, j);
        z0[j] = acc;
      }
      // hidden = gelu(z0 W1 + b1)
      std::vector<double> hidden(hd);
      for (int j = 0; j < hd; ++j) {
        double acc = m.head_b1[j];
        for (int i = 0; i < d; ++i) acc += z0[i] * m.head_w1(i, j);
        hidden[j] = gelu_ref(acc);
      }
      // logits slot (q, c) = hidden W2 + b2
      for (int q = 0; q < p * p; ++q) {
        for (int c = 0; c < cls; ++c) {
          const int slot = q * cls + c;
          double acc = m.head_b2[slot];
          for (int j = 0; j < hd; ++j) acc += hidden[j] * m.head_w2(j, slot);
          const int row = br * p + q / p;
          const int col = bc * p + q % p;
          worst = std::max(worst, std::abs(logits.at(row, col, c) - acc));
        }
      }
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("uniform logits cost ln(num_classes)") {
  const ToyModel m = zero_model(4, 8, 8, 4, kSampleSize);
  const SyntheticSample s = flat_sample(1);
  const std::vector<SyntheticSample> batch{s};
  const LossAndGrads lg = loss_and_grads(m, batch);
  CHECK(lg.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("a saturated correct prediction costs almost nothing") {
  ToyModel m = zero_model(4, 8, 8, 4, kSampleSize);
  // Bias every pixel's class-2 logit sky-high.
  for (int q = 0; q < 16; ++q) m.head_b2[q * 4 + 2] = 20.0;
  const std::vector<SyntheticSample> batch{flat_sample(2)};
  CHECK(loss_and_grads(m, batch).loss < 1e-3);
}

TEST_CASE("ignored pixels stay out of the loss") {
  ToyModel m = zero_model(4, 8, 8, 4, kSampleSize);
  for (int q = 0; q < 16; ++q) m.head_b2[q * 4 + 2] = 20.0;

  // Left half correct class, right half wrong: the wrong half dominates.
  SyntheticSample mixed = flat_sample(2);
  for (int r = 0; r < kSampleSize; ++r)
    for (int c = kSampleSize / 2; c < kSampleSize; ++c) mixed.labels.at(r, c) = 0;
  const double mixed_loss = loss_and_grads(m, {&mixed, 1}).loss;
  CHECK(mixed_loss > 5.0);

  // Masking the wrong half out removes its contribution entirely.
  SyntheticSample masked = flat_sample(2);
  for (int r = 0; r < kSampleSize; ++r)
    for (int c = kSampleSize / 2; c < kSampleSize; ++c) masked.labels.at(r, c) = kIgnoreLabel;
  CHECK(loss_and_grads(m, {&masked, 1}).loss < 1e-3);

  // A batch with nothing to count cannot produce a loss.
  const SyntheticSample all_ignored = flat_sample(kIgnoreLabel);
  CHECK_THROWS_AS(loss_and_grads(m, {&all_ignored, 1}), TrainError);
}

TEST_CASE("analytic gradients match central finite differences") {
  TrainConfig cfg;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 5;
  ToyModel m = init_model(cfg, kSampleSize, kSampleSize);
  const std::vector<SyntheticSample> batch = gen_dataset(123, 2);

  const LossAndGrads base = loss_and_grads(m, batch);
  const std::vector<std::pair<std::vector<double>*, const std::vector<double>*>> params = {
      {&m.embed.embedding.data, &base.grads.embedding.data},
      {&m.embed.position.data, &base.grads.position.data},
      {&m.head_w1.data, &base.grads.head_w1.data},
      {&m.head_b1, &base.grads.head_b1},
      {&m.head_w2.data, &base.grads.head_w2.data},
      {&m.head_b2, &base.grads.head_b2},
  };

  size_t total = 0;
  for (const auto& [theta, grad] : params) total += theta->size();
  REQUIRE(total <= 5000);  // small enough to brute-force every coordinate

  const double h = 1e-5;
  double worst_rel = 0.0;
  for (const auto& [theta, grad] : params) {
    REQUIRE(theta->size() == grad->size());
    for (size_t i = 0; i < theta->size(); ++i) {
      const double saved = (*theta)[i];
      (*theta)[i] = saved + h;
      const double plus = loss_and_grads(m, batch).loss;
      (*theta)[i] = saved - h;
      const double minus = loss_and_grads(m, batch).loss;
      (*theta)[i] = saved;

      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = (*grad)[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst_rel = std::max(worst_rel, rel);
    }
  }
  CHECK(worst_rel <= 1e-4);
}

TEST_CASE("the learning rate follows the polynomial schedule") {
  CHECK(poly_lr(0.1, 0, 100, 0.9) == doctest::Approx(0.1));
  CHECK(poly_lr(0.1, 100, 100, 0.9) == doctest::Approx(0.0));
  CHECK(poly_lr(0.1, 50, 100, 1.0) == doctest::Approx(0.05));
  // Decreasing in t.
  double prev = poly_lr(0.1, 0, 100, 0.9);
  for (int t = 1; t <= 100; ++t) {
    const double lr = poly_lr(0.1, t, 100, 0.9);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("one vanishing step leaves the initial parameters in place") {
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 2;
  cfg.lr0 = 1e-12;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 17;
  const auto data = gen_dataset(18, 4);
  const ToyModel trained = train(cfg, data);
  const ToyModel init = init_model(cfg, kSampleSize, kSampleSize);
  CHECK(max_abs_diff(trained.embed.embedding, init.embed.embedding) < 1e-9);
  CHECK(max_abs_diff(trained.head_w2, init.head_w2) < 1e-9);
}

TEST_CASE("training is bit-deterministic") {
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.batch_size = 4;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 9;
  const auto data = gen_dataset(10, 8);
  const ToyModel a = train(cfg, data);
  const ToyModel b = train(cfg, data);
  CHECK(a.embed.embedding.data == b.embed.embedding.data);
  CHECK(a.embed.position.data == b.embed.position.data);
  CHECK(a.head_w1.data == b.head_w1.data);
  CHECK(a.head_b1 == b.head_b1);
  CHECK(a.head_w2.data == b.head_w2.data);
  CHECK(a.head_b2 == b.head_b2);
}

TEST_CASE("training rejects a nonsensical configuration") {
  const auto data = gen_dataset(1, 2);
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(cfg, data), InvalidArgument);
  cfg = TrainConfig{};
  cfg.patch_size = 5;  // 32 is not divisible by 5
  CHECK_THROWS_AS(train(cfg, data), GeometryError);
  cfg = TrainConfig{};
  CHECK_THROWS_AS(train(cfg, {}), InvalidArgument);
}

TEST_CASE("evaluation produces a defined mIoU in range") {
  TrainConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 30;
  const ToyModel m = init_model(cfg, kSampleSize, kSampleSize);
  const auto data = gen_dataset(31, 10);
  const IouResult r = evaluate_model(m, data);
  REQUIRE(r.miou.has_value());
  CHECK(*r.miou >= 0.0);
  CHECK(*r.miou <= 1.0);
}

TEST_CASE("model checkpoints round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "patchlock_model_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.plm").string();

  TrainConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.seed = 21;
  const ToyModel m = init_model(cfg, kSampleSize, kSampleSize);
  write_model(path, m);
  const ToyModel back = read_model(path);
  CHECK(back.hidden == m.hidden);
  CHECK(back.num_classes == m.num_classes);
  CHECK(back.embed.patch_size == m.embed.patch_size);
  CHECK(back.embed.embedding.data == m.embed.embedding.data);
  CHECK(back.embed.position.data == m.embed.position.data);
  CHECK(back.head_w1.data == m.head_w1.data);
  CHECK(back.head_b1 == m.head_b1);
  CHECK(back.head_w2.data == m.head_w2.data);
  CHECK(back.head_b2 == m.head_b2);
}

TEST_CASE("dataset directories round-trip bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "patchlock_dataset_tests";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  const auto data = gen_dataset(55, 3);
  write_dataset(dir.string(), data);
  const auto back = read_dataset(dir.string());
  REQUIRE(back.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].image.data == data[i].image.data);
    CHECK(back[i].labels.labels == data[i].labels.labels);
  }
}
