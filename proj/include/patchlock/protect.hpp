#pragma once

#include <iosfwd>
#include <string>

#include "patchlock/image.hpp"
#include "patchlock/key.hpp"
#include "patchlock/matrix.hpp"

namespace patchlock {

// The protected asset: patch embedding matrix, per-patch position
// embeddings, and the patch geometry they assume.
struct PatchEmbedWeights {
  Matrix embedding;  // (p^2 c) x D
  Matrix position;   // N x D, row i = position embedding of patch i
  int patch_size = 0;
  int channels = 0;
  int embed_dim = 0;
  bool encrypted = false;  // metadata only; an encrypted matrix looks like any other

  void validate() const;  // throws ShapeError on inconsistent dimensions
};

struct EmbeddedPatches {
  Matrix z0;  // N x D
};

// z0 row i = (flattened patch i) * embedding + position row i.
EmbeddedPatches patch_embed(const ImageTensor& x, const PatchEmbedWeights& w);

// Model side: replace the embedding with enc * embedding. Position
// embeddings stay in plaintext.
PatchEmbedWeights encrypt_model(const PatchEmbedWeights& w, const KeyMaterial& km);

// Undo encrypt_model with the same key; the basis of key rotation.
PatchEmbedWeights decrypt_model(const PatchEmbedWeights& w, const KeyMaterial& km);

// Image side: multiply each flattened patch on the right by enc^-1 and
// reassemble. Output values generally leave [0, 1].
ImageTensor encrypt_image(const ImageTensor& x, const KeyMaterial& km);

// Inverse of encrypt_image (right-multiply by the forward matrix).
ImageTensor decrypt_image(const ImageTensor& x, const KeyMaterial& km);

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Compares embeddings of (plain image, plain model) against (image encrypted
// with km_image, model encrypted with km_model). With matching keys the two
// agree to rounding error; with different keys they diverge.
EquivalenceReport verify_equivalence(const ImageTensor& x, const PatchEmbedWeights& w,
                                     const KeyMaterial& km_model, const KeyMaterial& km_image,
                                     double tolerance);
EquivalenceReport verify_equivalence(const ImageTensor& x, const PatchEmbedWeights& w,
                                     const KeyMaterial& km, double tolerance);

// Weights file: magic "PLW1", u32 LE p/c/D/N, one encrypted flag byte, then
// f64 LE embedding (row-major) and position (row-major).
void write_weights(std::ostream& out, const PatchEmbedWeights& w);
PatchEmbedWeights read_weights(std::istream& in, const std::string& context);
void write_weights(const std::string& path, const PatchEmbedWeights& w);
PatchEmbedWeights read_weights(const std::string& path);

}  // namespace patchlock
