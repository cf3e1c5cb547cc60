#include "patchlock/protect.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace patchlock {

void PatchEmbedWeights::validate() const {
  const int expected_rows = patch_size * patch_size * channels;
  if (embedding.rows != expected_rows || embedding.cols != embed_dim) {
    std::ostringstream os;
    os << "embedding is " << embedding.rows << "x" << embedding.cols << ", expected "
       << expected_rows << "x" << embed_dim << " for p=" << patch_size << " c=" << channels
       << " D=" << embed_dim;
    throw ShapeError(os.str());
  }
  if (position.cols != embed_dim) {
    std::ostringstream os;
    os << "position embedding has " << position.cols << " columns, expected " << embed_dim;
    throw ShapeError(os.str());
  }
}

EmbeddedPatches patch_embed(const ImageTensor& x, const PatchEmbedWeights& w) {
  w.validate();
  if (x.channels != w.channels) {
    std::ostringstream os;
    os << "image has " << x.channels << " channels, weights expect " << w.channels;
    throw ShapeError(os.str());
  }
  const PatchMatrix pm = to_patches(x, w.patch_size);
  if (pm.n_patches() != w.position.rows) {
    std::ostringstream os;
    os << "image yields " << pm.n_patches() << " patches but weights carry "
       << w.position.rows << " position embeddings";
    throw ShapeError(os.str());
  }
  return EmbeddedPatches{add(multiply(pm.rows, w.embedding), w.position)};
}

namespace {

void check_key_geometry(const PatchEmbedWeights& w, const KeyMaterial& km) {
  if (km.patch_size != w.patch_size || km.channels != w.channels ||
      km.enc.rows != w.embedding.rows) {
    std::ostringstream os;
    os << "key material (p=" << km.patch_size << ", c=" << km.channels << ", side="
       << km.enc.rows << ") does not match weights (p=" << w.patch_size << ", c=" << w.channels
       << ", side=" << w.embedding.rows << ")";
    throw ShapeError(os.str());
  }
}

}  // namespace

PatchEmbedWeights encrypt_model(const PatchEmbedWeights& w, const KeyMaterial& km) {
  w.validate();
  if (w.encrypted) {
    throw StateError("weights are already encrypted; refusing to encrypt twice");
  }
  check_key_geometry(w, km);
  PatchEmbedWeights out = w;
  out.embedding = multiply(km.enc, w.embedding);
  out.encrypted = true;
  return out;
}

PatchEmbedWeights decrypt_model(const PatchEmbedWeights& w, const KeyMaterial& km) {
  w.validate();
  if (!w.encrypted) {
    throw StateError("weights are not encrypted; nothing to decrypt");
  }
  check_key_geometry(w, km);
  PatchEmbedWeights out = w;
  out.embedding = multiply(km.inv, w.embedding);
  out.encrypted = false;
  return out;
}

namespace {

ImageTensor transform_patches(const ImageTensor& x, const KeyMaterial& km, const Matrix& rhs) {
  if (x.channels != km.channels) {
    std::ostringstream os;
    os << "image has " << x.channels << " channels, key material expects " << km.channels;
    throw GeometryError(os.str());
  }
  PatchMatrix pm = to_patches(x, km.patch_size);
  pm.rows = multiply(pm.rows, rhs);
  return from_patches(pm);
}

}  // namespace

ImageTensor encrypt_image(const ImageTensor& x, const KeyMaterial& km) {
  return transform_patches(x, km, km.inv);
}

ImageTensor decrypt_image(const ImageTensor& x, const KeyMaterial& km) {
  return transform_patches(x, km, km.enc);
}

EquivalenceReport verify_equivalence(const ImageTensor& x, const PatchEmbedWeights& w,
                                     const KeyMaterial& km_model, const KeyMaterial& km_image,
                                     double tolerance) {
  const EmbeddedPatches plain = patch_embed(x, w);
  const PatchEmbedWeights w_enc = encrypt_model(w, km_model);
  const ImageTensor x_enc = encrypt_image(x, km_image);
  const EmbeddedPatches enc = patch_embed(x_enc, w_enc);
  const double diff = max_abs_diff(enc.z0, plain.z0);
  return EquivalenceReport{diff, tolerance, diff <= tolerance};
}

EquivalenceReport verify_equivalence(const ImageTensor& x, const PatchEmbedWeights& w,
                                     const KeyMaterial& km, double tolerance) {
  return verify_equivalence(x, w, km, km, tolerance);
}

void write_weights(std::ostream& out, const PatchEmbedWeights& w) {
  w.validate();
  out.write("PLW1", 4);
  binio::write_u32(out, static_cast<uint32_t>(w.patch_size));
  binio::write_u32(out, static_cast<uint32_t>(w.channels));
  binio::write_u32(out, static_cast<uint32_t>(w.embed_dim));
  binio::write_u32(out, static_cast<uint32_t>(w.position.rows));
  out.put(w.encrypted ? 1 : 0);
  for (double v : w.embedding.data) binio::write_f64(out, v);
  for (double v : w.position.data) binio::write_f64(out, v);
}

PatchEmbedWeights read_weights(std::istream& in, const std::string& context) {
  binio::expect_magic(in, "PLW1", context);
  const uint32_t p = binio::read_u32(in, "patch size");
  const uint32_t c = binio::read_u32(in, "channels");
  const uint32_t d = binio::read_u32(in, "embed dim");
  const uint32_t n = binio::read_u32(in, "patch count");
  if (p == 0 || c == 0 || d == 0 || n == 0 || p > 256 || c > 1024 || d > 65536 ||
      n > (1u << 24)) {
    std::ostringstream os;
    os << "implausible weights header (p=" << p << ", c=" << c << ", D=" << d << ", N=" << n
       << ") in " << context;
    throw FormatError(os.str());
  }
  const int flag = in.get();
  if (flag != 0 && flag != 1) {
    throw FormatError("bad encrypted flag in " + context);
  }
  PatchEmbedWeights w;
  w.patch_size = static_cast<int>(p);
  w.channels = static_cast<int>(c);
  w.embed_dim = static_cast<int>(d);
  w.encrypted = flag == 1;
  w.embedding = Matrix(static_cast<int>(p * p * c), static_cast<int>(d));
  w.position = Matrix(static_cast<int>(n), static_cast<int>(d));
  for (double& v : w.embedding.data) v = binio::read_f64(in, "embedding data");
  for (double& v : w.position.data) v = binio::read_f64(in, "position data");
  for (double v : w.embedding.data) {
    if (!std::isfinite(v)) throw FormatError("non-finite embedding value in " + context);
  }
  for (double v : w.position.data) {
    if (!std::isfinite(v)) throw FormatError("non-finite position value in " + context);
  }
  return w;
}

void write_weights(const std::string& path, const PatchEmbedWeights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open weights file for writing: " + path);
  write_weights(out, w);
  if (!out) throw IoError("failed writing weights file: " + path);
}

PatchEmbedWeights read_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file: " + path);
  return read_weights(in, path);
}

}  // namespace patchlock
