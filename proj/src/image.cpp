#include "patchlock/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace patchlock {

namespace {

void check_patch_geometry(int height, int width, int patch_size) {
  if (patch_size < 1) {
    throw InvalidArgument("patch size must be >= 1");
  }
  if (height % patch_size != 0 || width % patch_size != 0) {
    std::ostringstream os;
    os << "image " << height << "x" << width << " not divisible into " << patch_size << "x"
       << patch_size << " patches";
    throw GeometryError(os.str());
  }
}

}  // namespace

ImageTensor::ImageTensor(int height_, int width_, int channels_)
    : height(height_), width(width_), channels(channels_) {
  if (height < 0 || width < 0 || channels < 0) {
    throw InvalidArgument("image dimensions must be non-negative");
  }
  data.assign(static_cast<size_t>(height) * width * channels, 0.0);
}

PatchMatrix to_patches(const ImageTensor& x, int patch_size) {
  check_patch_geometry(x.height, x.width, patch_size);
  const int p = patch_size;
  const int gr = x.height / p;
  const int gc = x.width / p;
  const int dim = p * p * x.channels;

  PatchMatrix pm;
  pm.patch_size = p;
  pm.grid_rows = gr;
  pm.grid_cols = gc;
  pm.rows = Matrix(gr * gc, dim);
  for (int br = 0; br < gr; ++br) {
    for (int bc = 0; bc < gc; ++bc) {
      const int patch = br * gc + bc;
      int k = 0;
      for (int pr = 0; pr < p; ++pr) {
        for (int pc = 0; pc < p; ++pc) {
          for (int ch = 0; ch < x.channels; ++ch) {
            pm.rows(patch, k++) = x.at(br * p + pr, bc * p + pc, ch);
          }
        }
      }
    }
  }
  return pm;
}

ImageTensor from_patches(const PatchMatrix& pm) {
  const int p = pm.patch_size;
  if (p < 1 || pm.grid_rows < 1 || pm.grid_cols < 1) {
    throw GeometryError("patch matrix has an empty grid");
  }
  if (pm.rows.rows != pm.n_patches()) {
    std::ostringstream os;
    os << "patch matrix has " << pm.rows.rows << " rows but grid " << pm.grid_rows << "x"
       << pm.grid_cols << " implies " << pm.n_patches();
    throw GeometryError(os.str());
  }
  if (pm.rows.cols % (p * p) != 0) {
    std::ostringstream os;
    os << "patch dim " << pm.rows.cols << " is not a multiple of p^2 = " << p * p;
    throw GeometryError(os.str());
  }

  const int c = pm.channels();
  ImageTensor x(pm.grid_rows * p, pm.grid_cols * p, c);
  for (int br = 0; br < pm.grid_rows; ++br) {
    for (int bc = 0; bc < pm.grid_cols; ++bc) {
      const int patch = br * pm.grid_cols + bc;
      int k = 0;
      for (int pr = 0; pr < p; ++pr) {
        for (int pc = 0; pc < p; ++pc) {
          for (int ch = 0; ch < c; ++ch) {
            x.at(br * p + pr, bc * p + pc, ch) = pm.rows(patch, k++);
          }
        }
      }
    }
  }
  return x;
}

void write_tensor(const std::string& path, const ImageTensor& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open tensor file for writing: " + path);
  out.write("PLT1", 4);
  binio::write_u32(out, static_cast<uint32_t>(x.height));
  binio::write_u32(out, static_cast<uint32_t>(x.width));
  binio::write_u32(out, static_cast<uint32_t>(x.channels));
  for (double v : x.data) binio::write_f64(out, v);
  if (!out) throw IoError("failed writing tensor file: " + path);
}

ImageTensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file: " + path);
  binio::expect_magic(in, "PLT1", path);
  const uint32_t h = binio::read_u32(in, "tensor height");
  const uint32_t w = binio::read_u32(in, "tensor width");
  const uint32_t c = binio::read_u32(in, "tensor channels");
  if (h == 0 || w == 0 || c == 0 || h > 1u << 20 || w > 1u << 20 || c > 1024) {
    std::ostringstream os;
    os << "implausible tensor dimensions " << h << "x" << w << "x" << c << " in " << path;
    throw FormatError(os.str());
  }
  ImageTensor x(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (double& v : x.data) v = binio::read_f64(in, "tensor data");
  for (double v : x.data) {
    if (!std::isfinite(v)) throw FormatError("non-finite value in tensor file: " + path);
  }
  return x;
}

PpmImage read_ppm_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PPM file: " + path);

  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw FormatError("bad magic in " + path + ": expected \"P6\"");
  }

  // Header tokens may be separated by whitespace and '#' comments.
  auto next_int = [&](const char* what) {
    int ch = in.get();
    while (in && (std::isspace(ch) || ch == '#')) {
      if (ch == '#') {
        while (in && ch != '\n') ch = in.get();
      }
      ch = in.get();
    }
    long v = 0;
    bool any = false;
    while (in && std::isdigit(ch)) {
      v = v * 10 + (ch - '0');
      any = true;
      ch = in.get();
    }
    if (!any) throw FormatError(std::string("missing ") + what + " in PPM header: " + path);
    return v;
  };

  const long w = next_int("width");
  const long h = next_int("height");
  const long maxval = next_int("maxval");
  if (w < 1 || h < 1 || w > (1 << 20) || h > (1 << 20)) {
    throw FormatError("implausible PPM dimensions in " + path);
  }
  if (maxval != 255) {
    throw FormatError("only 8-bit PPM (maxval 255) is supported: " + path);
  }

  PpmImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw FormatError("PPM pixel data truncated: " + path);
  return img;
}

void write_ppm_bytes(const std::string& path, const PpmImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open PPM file for writing: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("failed writing PPM file: " + path);
}

ImageTensor read_ppm(const std::string& path) {
  const PpmImage img = read_ppm_bytes(path);
  ImageTensor x(img.height, img.width, 3);
  for (size_t i = 0; i < img.rgb.size(); ++i) x.data[i] = img.rgb[i] / 255.0;
  return x;
}

void write_ppm(const std::string& path, const ImageTensor& x) {
  if (x.channels != 3) {
    std::ostringstream os;
    os << "PPM export needs a 3-channel image, got " << x.channels << " channels";
    throw GeometryError(os.str());
  }
  PpmImage img;
  img.height = x.height;
  img.width = x.width;
  img.rgb.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double v = std::clamp(x.data[i], 0.0, 1.0);
    img.rgb[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  write_ppm_bytes(path, img);
}

}  // namespace patchlock
