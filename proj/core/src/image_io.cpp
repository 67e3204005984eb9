// PNG I/O via libpng's simplified API. Channel-planar [3,H,W] tensors are
// interleaved to RGB8 rows on write and deinterleaved on read.
#include "vsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "vsr/errors.hpp"

namespace vsr {

void write_png(const std::string& path, const TensorF& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw DimensionError("write_png: expected [3,H,W], got " + shape_str(chw.shape));
  const int64_t H = chw.dim(1), W = chw.dim(2);

  std::vector<unsigned char> rgb(size_t(H * W * 3));
  for (int64_t c = 0; c < 3; ++c) {
    const float* src = chw.ptr() + c * H * W;
    for (int64_t i = 0; i < H * W; ++i) {
      float v = std::clamp(src[i], 0.0f, 1.0f);
      rgb[size_t(i * 3 + c)] = (unsigned char)std::lround(double(v) * 255.0);
    }
  }

  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = (png_uint_32)W;
  img.height = (png_uint_32)H;
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), (png_int_32)(W * 3), nullptr))
    throw IoError("write_png: " + path + ": " + img.message);
}

TensorF read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw IoError("read_png: " + path + ": " + img.message);
  img.format = PNG_FORMAT_RGB;

  const int64_t H = img.height, W = img.width;
  std::vector<unsigned char> rgb(size_t(PNG_IMAGE_SIZE(img)));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), (png_int_32)(W * 3), nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("read_png: " + path + ": " + msg);
  }

  TensorF out({3, H, W});
  for (int64_t c = 0; c < 3; ++c) {
    float* dst = out.ptr() + c * H * W;
    for (int64_t i = 0; i < H * W; ++i) dst[i] = float(rgb[size_t(i * 3 + c)]) / 255.0f;
  }
  return out;
}

}  // namespace vsr
