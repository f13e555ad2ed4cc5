#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lightbsr {

// 3-channel floating point image, planar CHW layout, canonical range [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // 3 * height * width

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(3u * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t size() const { return pixels.size(); }
};

Image make_constant_image(int h, int w, double value);

// 8-bit RGB PNG round trip; values are clamped to [0,1] before quantization.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Reads only the IHDR header; avoids decoding full pixel data during scans.
bool read_png_dims(const std::string& path, int* height, int* width);

// Dihedral-group augmentation: index in [0,8) selects rotation by
// 90deg * (index % 4) composed with an optional horizontal flip (index >= 4).
Image dihedral_transform(const Image& img, int index);

Image crop(const Image& img, int y0, int x0, int h, int w);

}  // namespace lightbsr
