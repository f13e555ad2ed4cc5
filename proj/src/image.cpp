#include "lightbsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace lightbsr {

Image make_constant_image(int h, int w, double value) {
  Image img(h, w);
  std::fill(img.pixels.begin(), img.pixels.end(), value);
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png decode error: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<std::uint8_t> row(3u * w);
  Image img(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, static_cast<int>(y), static_cast<int>(x)) =
            row[3 * x + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png encode error: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(3u * img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        row[3 * x + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

bool read_png_dims(const std::string& path, int* height, int* width) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) return false;
  std::uint8_t hdr[24];
  if (std::fread(hdr, 1, sizeof(hdr), fp.get()) != sizeof(hdr)) return false;
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (!std::equal(sig, sig + 8, hdr)) return false;
  // IHDR is always the first chunk: width/height are big-endian at offsets 16/20.
  auto be32 = [&](int off) {
    return (static_cast<std::uint32_t>(hdr[off]) << 24) |
           (static_cast<std::uint32_t>(hdr[off + 1]) << 16) |
           (static_cast<std::uint32_t>(hdr[off + 2]) << 8) |
           static_cast<std::uint32_t>(hdr[off + 3]);
  };
  *width = static_cast<int>(be32(16));
  *height = static_cast<int>(be32(20));
  return *width > 0 && *height > 0;
}

Image dihedral_transform(const Image& img, int index) {
  if (index < 0 || index >= 8) throw std::invalid_argument("dihedral index");
  const int rot = index % 4;
  const bool flip = index >= 4;
  const bool swaps = (rot % 2) == 1;
  Image out(swaps ? img.width : img.height, swaps ? img.height : img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int fx = flip ? (img.width - 1 - x) : x;
      int ty = 0, tx = 0;
      switch (rot) {
        case 0: ty = y; tx = x; break;
        case 1: ty = img.width - 1 - x; tx = y; break;   // 90 deg CCW
        case 2: ty = img.height - 1 - y; tx = img.width - 1 - x; break;
        case 3: ty = x; tx = img.height - 1 - y; break;  // 270 deg CCW
      }
      for (int c = 0; c < 3; ++c) out.at(c, ty, tx) = img.at(c, y, fx);
    }
  }
  return out;
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width)
    throw std::out_of_range("crop window outside image");
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

}  // namespace lightbsr
