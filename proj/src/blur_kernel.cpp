#include "lightbsr/blur_kernel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lightbsr {

double BlurKernel::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

static void check_size(int size) {
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd and >= 3");
}

static void normalize(BlurKernel& k) {
  double s = k.sum();
  if (s <= 0.0) throw std::runtime_error("kernel mass is zero");
  for (double& w : k.weights) w /= s;
}

BlurKernel make_delta_kernel(int size) {
  check_size(size);
  BlurKernel k;
  k.size = size;
  k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);
  k.at(size / 2, size / 2) = 1.0;
  return k;
}

BlurKernel make_isotropic_kernel(double width, int size) {
  check_size(size);
  if (width < 0.0) throw std::invalid_argument("degenerate kernel width");
  if (width == 0.0) return make_delta_kernel(size);

  BlurKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int c = size / 2;
  const double inv = 1.0 / (2.0 * width * width);
  for (int y = 0; y < size; ++y) {
    const double dy = y - c;
    for (int x = 0; x < size; ++x) {
      const double dx = x - c;
      k.at(y, x) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  normalize(k);
  return k;
}

BlurKernel make_anisotropic_kernel(double eig1, double eig2, double angle, int size) {
  check_size(size);
  if (eig1 <= 0.0 || eig2 <= 0.0)
    throw std::invalid_argument("singular covariance: eigenvalues must be positive");

  // Sigma = R diag(eig1, eig2) R^T; the density needs Sigma^{-1}.
  const double c = std::cos(angle), s = std::sin(angle);
  const double i1 = 1.0 / eig1, i2 = 1.0 / eig2;
  const double a = c * c * i1 + s * s * i2;
  const double b = c * s * (i1 - i2);
  const double d = s * s * i1 + c * c * i2;

  BlurKernel k;
  k.size = size;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  for (int y = 0; y < size; ++y) {
    const double dy = y - half;
    for (int x = 0; x < size; ++x) {
      const double dx = x - half;
      const double q = a * dx * dx + 2.0 * b * dx * dy + d * dy * dy;
      k.at(y, x) = std::exp(-0.5 * q);
    }
  }
  normalize(k);
  return k;
}

std::string kernel_to_text(const BlurKernel& k) {
  std::ostringstream out;
  char buf[32];
  for (int y = 0; y < k.size; ++y) {
    for (int x = 0; x < k.size; ++x) {
      std::snprintf(buf, sizeof(buf), "%.17g", k.at(y, x));
      out << buf << (x + 1 == k.size ? "" : " ");
    }
    out << "\n";
  }
  return out.str();
}

BlurKernel kernel_from_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  const int size = static_cast<int>(std::lround(std::sqrt(double(vals.size()))));
  if (size * static_cast<std::size_t>(size) != vals.size() || size % 2 == 0)
    throw std::runtime_error("malformed kernel text");
  BlurKernel k;
  k.size = size;
  k.weights = std::move(vals);
  return k;
}

}  // namespace lightbsr
