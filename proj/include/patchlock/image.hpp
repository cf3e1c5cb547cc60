#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchlock/matrix.hpp"

namespace patchlock {

// h x w x c real-valued image. Layout is row-major by (row, col, channel)
// with the channel index fastest. Plain loaded images live in [0, 1];
// encrypted images may hold any finite reals.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int height, int width, int channels);

  double& at(int r, int c, int ch) {
    return data[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
};

// An image cut into non-overlapping p x p blocks, one flattened block per
// row. Blocks are enumerated in raster order over the block grid; within a
// block the flattening is (row, col, channel), channel fastest.
struct PatchMatrix {
  int patch_size = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  Matrix rows;  // n_patches() x patch_dim()

  int n_patches() const { return grid_rows * grid_cols; }
  int patch_dim() const { return rows.cols; }
  int channels() const { return patch_dim() / (patch_size * patch_size); }
};

PatchMatrix to_patches(const ImageTensor& x, int patch_size);
ImageTensor from_patches(const PatchMatrix& pm);

// Tensor file: magic "PLT1", u32 LE height/width/channels, then f64 LE data
// in the canonical layout.
void write_tensor(const std::string& path, const ImageTensor& x);
ImageTensor read_tensor(const std::string& path);

// 8-bit binary PPM (P6). Import maps bytes to [0,1] by dividing by 255;
// export clamps to [0,1] and rounds back to bytes.
ImageTensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageTensor& x);

// Raw P6 plumbing shared with the label-map files.
struct PpmImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> rgb;  // 3 bytes per pixel
};
PpmImage read_ppm_bytes(const std::string& path);
void write_ppm_bytes(const std::string& path, const PpmImage& img);

}  // namespace patchlock
