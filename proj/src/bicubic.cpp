#include "lightbsr/bicubic.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace lightbsr {

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Symmetric boundary index (reflect including the edge pixel), valid for
// any integer input as long as n >= 1.
int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

struct TapRow {
  int first = 0;
  std::vector<double> w;
};

// Precomputes the contribution of source samples to each output position
// along one axis, matching the classical antialiased resize: output pixel i
// is centered at (i + 0.5) * in/out - 0.5 in source coordinates.
std::vector<TapRow> build_taps(int in_n, int out_n) {
  const double ratio = static_cast<double>(in_n) / out_n;
  const double spread = ratio > 1.0 ? ratio : 1.0;  // widen only when shrinking
  const double support = 2.0 * spread;
  std::vector<TapRow> rows(out_n);
  for (int i = 0; i < out_n; ++i) {
    const double center = (i + 0.5) * ratio - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::floor(center + support));
    TapRow row;
    row.first = lo;
    row.w.resize(static_cast<std::size_t>(hi - lo + 1));
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double wj = cubic_weight((center - j) / spread);
      row.w[static_cast<std::size_t>(j - lo)] = wj;
      sum += wj;
    }
    for (double& wj : row.w) wj /= sum;
    rows[i] = std::move(row);
  }
  return rows;
}

}  // namespace

Image bicubic_resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bad target size");
  const auto col_taps = build_taps(img.height, out_h);
  const auto row_taps = build_taps(img.width, out_w);

  // Vertical pass then horizontal pass.
  Image mid(out_h, img.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const TapRow& t = col_taps[y];
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t.w.size(); ++j)
          acc += t.w[j] * img.at(c, mirror_index(t.first + static_cast<int>(j), img.height), x);
        mid.at(c, y, x) = acc;
      }
    }
  }
  Image out(out_h, out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const TapRow& t = row_taps[x];
        double acc = 0.0;
        for (std::size_t j = 0; j < t.w.size(); ++j)
          acc += t.w[j] * mid.at(c, y, mirror_index(t.first + static_cast<int>(j), img.width));
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

Image bicubic_downsample(const Image& img, int scale) {
  if (scale < 1) throw std::invalid_argument("invalid scale");
  if (img.height % scale != 0 || img.width % scale != 0)
    throw std::invalid_argument("image dims not divisible by scale");
  return bicubic_resize(img, img.height / scale, img.width / scale);
}

Image bicubic_upsample(const Image& img, int scale) {
  if (scale < 1) throw std::invalid_argument("invalid scale");
  return bicubic_resize(img, img.height * scale, img.width * scale);
}

}  // namespace lightbsr
