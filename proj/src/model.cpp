#include "patchlock/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "binio.hpp"
#include "patchlock/rng.hpp"

namespace patchlock {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void add_row_vector(Matrix& m, const std::vector<double>& v) {
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m(i, j) += v[j];
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out[j] += m(i, j);
  return out;
}

void accumulate_into(Matrix& acc, const Matrix& g) {
  for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

void accumulate_into(std::vector<double>& acc, const std::vector<double>& g) {
  for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

std::vector<uint32_t> dataset_seed_words(uint64_t seed, uint64_t index) {
  return {static_cast<uint32_t>(seed & 0xffffffffu), static_cast<uint32_t>(seed >> 32),
          rng_domain::kDataset, static_cast<uint32_t>(index & 0xffffffffu),
          static_cast<uint32_t>(index >> 32)};
}

// Shape paint colors for classes 1..3; background (class 0) is noisy gray.
constexpr double kClassColors[3][3] = {
    {0.85, 0.15, 0.15},
    {0.15, 0.80, 0.20},
    {0.20, 0.30, 0.90},
};

SyntheticSample gen_sample(uint64_t seed, uint64_t index) {
  RandomStream rng(dataset_seed_words(seed, index));
  SyntheticSample s{ImageTensor(kSampleSize, kSampleSize, kSampleChannels),
                    SegmentationMap(kSampleSize, kSampleSize, 0)};

  const double base = 0.25 + 0.2 * rng.uniform();
  for (int r = 0; r < kSampleSize; ++r)
    for (int c = 0; c < kSampleSize; ++c)
      for (int ch = 0; ch < kSampleChannels; ++ch)
        s.image.at(r, c, ch) = std::clamp(base + 0.05 * rng.normal(), 0.0, 1.0);

  auto paint = [&](int r, int c, int cls) {
    s.labels.at(r, c) = static_cast<uint8_t>(cls);
    for (int ch = 0; ch < kSampleChannels; ++ch) {
      s.image.at(r, c, ch) =
          std::clamp(kClassColors[cls - 1][ch] + 0.03 * rng.normal(), 0.0, 1.0);
    }
  };

  const int num_shapes = 1 + static_cast<int>(rng.below(3));
  for (int shape = 0; shape < num_shapes; ++shape) {
    const int cls = 1 + static_cast<int>(rng.below(3));
    if (rng.below(2) == 0) {
      const int sw = 6 + static_cast<int>(rng.below(7));
      const int sh = 6 + static_cast<int>(rng.below(7));
      const int x0 = static_cast<int>(rng.below(kSampleSize - sw + 1));
      const int y0 = static_cast<int>(rng.below(kSampleSize - sh + 1));
      for (int r = y0; r < y0 + sh; ++r)
        for (int c = x0; c < x0 + sw; ++c) paint(r, c, cls);
    } else {
      const int radius = 3 + static_cast<int>(rng.below(4));
      const int cx = radius + static_cast<int>(rng.below(kSampleSize - 2 * radius));
      const int cy = radius + static_cast<int>(rng.below(kSampleSize - 2 * radius));
      for (int r = cy - radius; r <= cy + radius; ++r)
        for (int c = cx - radius; c <= cx + radius; ++c)
          if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius) paint(r, c, cls);
    }
  }
  return s;
}

// Full forward pass with every intermediate kept for backprop.
struct ForwardTrace {
  PatchMatrix patches;  // N x p^2 c
  Matrix z0;            // N x D
  Matrix pre_act;       // N x H
  Matrix hidden;        // N x H
  Matrix logits;        // N x p^2 C
};

ForwardTrace forward_trace(const ToyModel& m, const ImageTensor& x) {
  ForwardTrace t;
  t.patches = to_patches(x, m.embed.patch_size);
  if (x.channels != m.embed.channels) {
    std::ostringstream os;
    os << "image has " << x.channels << " channels, model expects " << m.embed.channels;
    throw ShapeError(os.str());
  }
  if (t.patches.n_patches() != m.embed.position.rows) {
    std::ostringstream os;
    os << "image yields " << t.patches.n_patches() << " patches but model carries "
       << m.embed.position.rows << " position embeddings";
    throw ShapeError(os.str());
  }
  t.z0 = add(multiply(t.patches.rows, m.embed.embedding), m.embed.position);
  t.pre_act = multiply(t.z0, m.head_w1);
  add_row_vector(t.pre_act, m.head_b1);
  t.hidden = t.pre_act;
  for (double& v : t.hidden.data) v = gelu(v);
  t.logits = multiply(t.hidden, m.head_w2);
  add_row_vector(t.logits, m.head_b2);
  return t;
}

}  // namespace

void ToyModel::validate() const {
  embed.validate();
  const int d = embed.embed_dim;
  const int out = embed.patch_size * embed.patch_size * num_classes;
  if (head_w1.rows != d || head_w1.cols != hidden ||
      static_cast<int>(head_b1.size()) != hidden) {
    std::ostringstream os;
    os << "first head layer is " << head_w1.rows << "x" << head_w1.cols << " with "
       << head_b1.size() << " biases, expected " << d << "x" << hidden;
    throw ShapeError(os.str());
  }
  if (head_w2.rows != hidden || head_w2.cols != out ||
      static_cast<int>(head_b2.size()) != out) {
    std::ostringstream os;
    os << "second head layer is " << head_w2.rows << "x" << head_w2.cols << " with "
       << head_b2.size() << " biases, expected " << hidden << "x" << out;
    throw ShapeError(os.str());
  }
}

std::vector<SyntheticSample> gen_dataset(uint64_t seed, int n) {
  if (n < 1) throw InvalidArgument("dataset size must be >= 1");
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(gen_sample(seed, static_cast<uint64_t>(i)));
  return out;
}

ImageTensor forward(const ToyModel& m, const ImageTensor& x) {
  m.validate();
  ForwardTrace t = forward_trace(m, x);
  // The logits row of patch i is laid out like a flattened p x p patch with
  // num_classes channels, so patch reassembly is the same as for images.
  PatchMatrix pm;
  pm.patch_size = m.embed.patch_size;
  pm.grid_rows = t.patches.grid_rows;
  pm.grid_cols = t.patches.grid_cols;
  pm.rows = std::move(t.logits);
  return from_patches(pm);
}

SegmentationMap argmax_map(const ImageTensor& logits) {
  SegmentationMap map(logits.height, logits.width);
  for (int r = 0; r < logits.height; ++r) {
    for (int c = 0; c < logits.width; ++c) {
      int best = 0;
      double best_v = logits.at(r, c, 0);
      for (int k = 1; k < logits.channels; ++k) {
        const double v = logits.at(r, c, k);
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      map.at(r, c) = static_cast<uint8_t>(best);
    }
  }
  return map;
}

LossAndGrads loss_and_grads(const ToyModel& m, std::span<const SyntheticSample> batch) {
  m.validate();
  if (batch.empty()) throw InvalidArgument("batch must be non-empty");

  const int p = m.embed.patch_size;
  const int classes = m.num_classes;

  LossAndGrads out;
  out.grads.embedding = Matrix(m.embed.embedding.rows, m.embed.embedding.cols);
  out.grads.position = Matrix(m.embed.position.rows, m.embed.position.cols);
  out.grads.head_w1 = Matrix(m.head_w1.rows, m.head_w1.cols);
  out.grads.head_w2 = Matrix(m.head_w2.rows, m.head_w2.cols);
  out.grads.head_b1.assign(m.head_b1.size(), 0.0);
  out.grads.head_b2.assign(m.head_b2.size(), 0.0);

  double loss_sum = 0.0;
  uint64_t counted = 0;

  for (const SyntheticSample& sample : batch) {
    if (sample.labels.height != sample.image.height ||
        sample.labels.width != sample.image.width) {
      throw ShapeError("sample image and label dimensions disagree");
    }
    ForwardTrace t = forward_trace(m, sample.image);
    const int grid_cols = t.patches.grid_cols;

    // Softmax cross-entropy per pixel; d_logits holds softmax - onehot.
    Matrix d_logits(t.logits.rows, t.logits.cols);
    for (int patch = 0; patch < t.logits.rows; ++patch) {
      const int br = patch / grid_cols;
      const int bc = patch % grid_cols;
      for (int px = 0; px < p * p; ++px) {
        const int row = br * p + px / p;
        const int col = bc * p + px % p;
        const uint8_t label = sample.labels.at(row, col);
        if (label == kIgnoreLabel) continue;
        if (label >= classes) {
          std::ostringstream os;
          os << "label " << int(label) << " outside [0, " << classes << ")";
          throw LabelError(os.str());
        }
        const int base = px * classes;
        double max_logit = t.logits(patch, base);
        for (int k = 1; k < classes; ++k)
          max_logit = std::max(max_logit, t.logits(patch, base + k));
        double denom = 0.0;
        for (int k = 0; k < classes; ++k)
          denom += std::exp(t.logits(patch, base + k) - max_logit);
        loss_sum += -(t.logits(patch, base + label) - max_logit - std::log(denom));
        for (int k = 0; k < classes; ++k) {
          const double softmax = std::exp(t.logits(patch, base + k) - max_logit) / denom;
          d_logits(patch, base + k) = softmax - (k == label ? 1.0 : 0.0);
        }
        ++counted;
      }
    }

    accumulate_into(out.grads.head_w2, multiply(transpose(t.hidden), d_logits));
    accumulate_into(out.grads.head_b2, column_sums(d_logits));
    Matrix d_hidden = multiply(d_logits, transpose(m.head_w2));
    for (size_t i = 0; i < d_hidden.data.size(); ++i)
      d_hidden.data[i] *= gelu_grad(t.pre_act.data[i]);
    accumulate_into(out.grads.head_w1, multiply(transpose(t.z0), d_hidden));
    accumulate_into(out.grads.head_b1, column_sums(d_hidden));
    const Matrix d_z0 = multiply(d_hidden, transpose(m.head_w1));
    accumulate_into(out.grads.embedding, multiply(transpose(t.patches.rows), d_z0));
    accumulate_into(out.grads.position, d_z0);
  }

  if (counted == 0) throw TrainError("loss undefined: every pixel in the batch is ignored");

  const double scale = 1.0 / static_cast<double>(counted);
  out.loss = loss_sum * scale;
  for (double& v : out.grads.embedding.data) v *= scale;
  for (double& v : out.grads.position.data) v *= scale;
  for (double& v : out.grads.head_w1.data) v *= scale;
  for (double& v : out.grads.head_w2.data) v *= scale;
  for (double& v : out.grads.head_b1) v *= scale;
  for (double& v : out.grads.head_b2) v *= scale;
  return out;
}

double poly_lr(double lr0, int t, int total, double power) {
  return lr0 * std::pow(1.0 - static_cast<double>(t) / total, power);
}

ToyModel init_model(const TrainConfig& cfg, int image_height, int image_width) {
  if (cfg.patch_size < 1 || image_height % cfg.patch_size != 0 ||
      image_width % cfg.patch_size != 0) {
    std::ostringstream os;
    os << "image " << image_height << "x" << image_width << " not divisible by patch size "
       << cfg.patch_size;
    throw GeometryError(os.str());
  }
  const int p = cfg.patch_size;
  const int in_dim = p * p * kSampleChannels;
  const int n_patches = (image_height / p) * (image_width / p);
  const int out_dim = p * p * cfg.num_classes;

  RandomStream rng(seed_words_from_u64(cfg.seed, rng_domain::kModelInit));
  auto fill_gaussian = [&rng](Matrix& m, double scale) {
    for (double& v : m.data) v = scale * rng.normal();
  };

  ToyModel m;
  m.embed.patch_size = p;
  m.embed.channels = kSampleChannels;
  m.embed.embed_dim = cfg.embed_dim;
  m.embed.embedding = Matrix(in_dim, cfg.embed_dim);
  m.embed.position = Matrix(n_patches, cfg.embed_dim);
  m.head_w1 = Matrix(cfg.embed_dim, cfg.hidden);
  m.head_b1.assign(cfg.hidden, 0.0);
  m.head_w2 = Matrix(cfg.hidden, out_dim);
  m.head_b2.assign(out_dim, 0.0);
  m.hidden = cfg.hidden;
  m.num_classes = cfg.num_classes;

  fill_gaussian(m.embed.embedding, 1.0 / std::sqrt(in_dim));
  fill_gaussian(m.embed.position, 1.0 / std::sqrt(cfg.embed_dim));
  fill_gaussian(m.head_w1, 1.0 / std::sqrt(cfg.embed_dim));
  fill_gaussian(m.head_w2, 1.0 / std::sqrt(cfg.hidden));
  return m;
}

ToyModel train(const TrainConfig& cfg, std::span<const SyntheticSample> data) {
  if (cfg.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (cfg.lr0 <= 0.0) throw InvalidArgument("lr0 must be > 0");
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (data.empty()) throw InvalidArgument("training data must be non-empty");
  const int h = data.front().image.height;
  const int w = data.front().image.width;
  for (const SyntheticSample& s : data) {
    if (s.image.height != h || s.image.width != w) {
      throw ShapeError("training samples must share one image geometry");
    }
  }

  ToyModel m = init_model(cfg, h, w);

  ModelGradients vel;
  vel.embedding = Matrix(m.embed.embedding.rows, m.embed.embedding.cols);
  vel.position = Matrix(m.embed.position.rows, m.embed.position.cols);
  vel.head_w1 = Matrix(m.head_w1.rows, m.head_w1.cols);
  vel.head_w2 = Matrix(m.head_w2.rows, m.head_w2.cols);
  vel.head_b1.assign(m.head_b1.size(), 0.0);
  vel.head_b2.assign(m.head_b2.size(), 0.0);

  RandomStream batch_rng(seed_words_from_u64(cfg.seed, rng_domain::kBatchSampling));
  std::vector<SyntheticSample> batch(cfg.batch_size);

  auto step = [&](std::vector<double>& param, std::vector<double>& velocity,
                  const std::vector<double>& grad, double lr) {
    for (size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i] + cfg.weight_decay * param[i];
      velocity[i] = cfg.momentum * velocity[i] + g;
      param[i] -= lr * velocity[i];
    }
  };

  for (int t = 0; t < cfg.iterations; ++t) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch[b] = data[batch_rng.below(data.size())];
    }
    LossAndGrads lg = loss_and_grads(m, batch);
    if (!std::isfinite(lg.loss)) {
      std::ostringstream os;
      os << "training diverged: loss is not finite at iteration " << t;
      throw TrainError(os.str());
    }
    const double lr = poly_lr(cfg.lr0, t, cfg.iterations, cfg.poly_power);
    step(m.embed.embedding.data, vel.embedding.data, lg.grads.embedding.data, lr);
    step(m.embed.position.data, vel.position.data, lg.grads.position.data, lr);
    step(m.head_w1.data, vel.head_w1.data, lg.grads.head_w1.data, lr);
    step(m.head_b1, vel.head_b1, lg.grads.head_b1, lr);
    step(m.head_w2.data, vel.head_w2.data, lg.grads.head_w2.data, lr);
    step(m.head_b2, vel.head_b2, lg.grads.head_b2, lr);
  }
  return m;
}

IouResult evaluate_model(const ToyModel& m, std::span<const SyntheticSample> data,
                         const KeyMaterial* image_key) {
  ConfusionCounts counts(m.num_classes);
  for (const SyntheticSample& s : data) {
    const ImageTensor* x = &s.image;
    ImageTensor encrypted;
    if (image_key != nullptr) {
      encrypted = encrypt_image(s.image, *image_key);
      x = &encrypted;
    }
    counts.accumulate(argmax_map(forward(m, *x)), s.labels);
  }
  return mean_iou(counts);
}

void write_model(const std::string& path, const ToyModel& m) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  write_weights(out, m.embed);
  out.write("PLH1", 4);
  binio::write_u32(out, static_cast<uint32_t>(m.hidden));
  binio::write_u32(out, static_cast<uint32_t>(m.num_classes));
  for (double v : m.head_w1.data) binio::write_f64(out, v);
  for (double v : m.head_b1) binio::write_f64(out, v);
  for (double v : m.head_w2.data) binio::write_f64(out, v);
  for (double v : m.head_b2) binio::write_f64(out, v);
  if (!out) throw IoError("failed writing model file: " + path);
}

ToyModel read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  ToyModel m;
  m.embed = read_weights(in, path);
  binio::expect_magic(in, "PLH1", path);
  const uint32_t hidden = binio::read_u32(in, "hidden width");
  const uint32_t classes = binio::read_u32(in, "class count");
  if (hidden == 0 || hidden > 65536 || classes == 0 || classes >= kIgnoreLabel) {
    std::ostringstream os;
    os << "implausible head header (H=" << hidden << ", C=" << classes << ") in " << path;
    throw FormatError(os.str());
  }
  m.hidden = static_cast<int>(hidden);
  m.num_classes = static_cast<int>(classes);
  const int p = m.embed.patch_size;
  m.head_w1 = Matrix(m.embed.embed_dim, m.hidden);
  m.head_b1.assign(m.hidden, 0.0);
  m.head_w2 = Matrix(m.hidden, p * p * m.num_classes);
  m.head_b2.assign(static_cast<size_t>(p) * p * m.num_classes, 0.0);
  for (double& v : m.head_w1.data) v = binio::read_f64(in, "head w1");
  for (double& v : m.head_b1) v = binio::read_f64(in, "head b1");
  for (double& v : m.head_w2.data) v = binio::read_f64(in, "head w2");
  for (double& v : m.head_b2) v = binio::read_f64(in, "head b2");
  m.validate();
  return m;
}

namespace {

std::string index_name(const char* prefix, int i, const char* ext) {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << ext;
  return os.str();
}

}  // namespace

void write_dataset(const std::string& dir, std::span<const SyntheticSample> samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto base = std::filesystem::path(dir);
    write_tensor((base / index_name("image_", static_cast<int>(i), ".plt")).string(),
                 samples[i].image);
    write_label_map((base / index_name("labels_", static_cast<int>(i), ".ppm")).string(),
                    samples[i].labels);
  }
}

std::vector<SyntheticSample> read_dataset(const std::string& dir) {
  std::vector<SyntheticSample> out;
  for (int i = 0;; ++i) {
    const auto base = std::filesystem::path(dir);
    const auto image_path = base / index_name("image_", i, ".plt");
    if (!std::filesystem::exists(image_path)) break;
    SyntheticSample s;
    s.image = read_tensor(image_path.string());
    s.labels = read_label_map((base / index_name("labels_", i, ".ppm")).string());
    if (s.labels.height != s.image.height || s.labels.width != s.image.width) {
      throw FormatError("image and label dimensions disagree for sample " +
                        std::to_string(i) + " in " + dir);
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("no samples found in dataset directory: " + dir);
  return out;
}

}  // namespace patchlock
