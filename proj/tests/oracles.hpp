#pragma once

// Independent reference implementations used as test oracles. Everything in
// this header is written against the mathematical definitions directly and
// deliberately shares no code with the library's optimized paths.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lightbsr/blur_kernel.hpp"
#include "lightbsr/image.hpp"
#include "lightbsr/tensor.hpp"

namespace oracles {

using lightbsr::BlurKernel;
using lightbsr::Image;
using lightbsr::Tensor;

// Reflect-101 index (no edge repetition), same convention the library claims.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Direct per-pixel convolution with reflect padding.
inline Image naive_convolve(const Image& img, const BlurKernel& k) {
  Image out(img.height, img.width);
  const int r = k.size / 2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += k.at(dy + r, dx + r) *
                   img.at(c, reflect_index(y + dy, img.height),
                          reflect_index(x + dx, img.width));
        out.at(c, y, x) = acc;
      }
  return out;
}

// Quadruple-loop InfoNCE oracle over positives (i, j), batch and queue.
// p, m: [B][D][dim] unit vectors; queue: rows of unit vectors.
inline double naive_contrastive(const std::vector<std::vector<std::vector<double>>>& p,
                                const std::vector<std::vector<std::vector<double>>>& m,
                                const std::vector<std::vector<double>>& queue,
                                double tau) {
  const std::size_t b = p.size(), d = p[0].size(), dim = p[0][0].size();
  auto dot = [dim](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += x[k] * y[k];
    return s;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      double batch_mean = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi) {
        const double pos = std::exp(dot(p[bi][i], m[bi][j]) / tau);
        double denom = pos;
        for (const auto& q : queue) denom += std::exp(dot(p[bi][i], q) / tau);
        batch_mean += -std::log(pos / denom);
      }
      total += batch_mean / static_cast<double>(b);
    }
  return total / static_cast<double>(d * (d - 1));
}

// Cyclic Jacobi eigensolver for small symmetric matrices (row-major n x n).
// Returns eigenvalues descending with matching eigenvector columns.
inline void jacobi_eigh(std::vector<double> a, int n, std::vector<double>* evals,
                        std::vector<double>* evecs) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[static_cast<std::size_t>(i) * n + j] *
                                              a[static_cast<std::size_t>(i) * n + j];
    if (off < 1e-24) break;
    for (int pi = 0; pi < n; ++pi)
      for (int qi = pi + 1; qi < n; ++qi) {
        const double apq = a[static_cast<std::size_t>(pi) * n + qi];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(pi) * n + pi];
        const double aqq = a[static_cast<std::size_t>(qi) * n + qi];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * n + pi];
          const double akq = a[static_cast<std::size_t>(k) * n + qi];
          a[static_cast<std::size_t>(k) * n + pi] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * n + qi] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[static_cast<std::size_t>(pi) * n + k];
          const double aqk = a[static_cast<std::size_t>(qi) * n + k];
          a[static_cast<std::size_t>(pi) * n + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(qi) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[static_cast<std::size_t>(k) * n + pi];
          const double vkq = v[static_cast<std::size_t>(k) * n + qi];
          v[static_cast<std::size_t>(k) * n + pi] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * n + qi] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return a[static_cast<std::size_t>(x) * n + x] > a[static_cast<std::size_t>(y) * n + y];
  });
  evals->resize(static_cast<std::size_t>(n));
  evecs->assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    (*evals)[static_cast<std::size_t>(i)] =
        a[static_cast<std::size_t>(order[static_cast<std::size_t>(i)]) * n +
          order[static_cast<std::size_t>(i)]];
    for (int k = 0; k < n; ++k)
      (*evecs)[static_cast<std::size_t>(k) * n + i] =
          v[static_cast<std::size_t>(k) * n + order[static_cast<std::size_t>(i)]];
  }
}

// Naive per-pixel MSE -> PSNR on [0,1] images (rgb, no shave).
inline double naive_psnr_rgb(const Image& a, const Image& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(1.0 / mse);
}

// Smooth deterministic test image (sum of sinusoids); has structure at all
// scales so SR losses are non-trivial.
inline Image make_test_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double fx[3], fy[3], ph[3];
  for (int c = 0; c < 3; ++c) {
    fx[c] = 2.0 + 10.0 * u(rng);
    fy[c] = 2.0 + 10.0 * u(rng);
    ph[c] = 6.28 * u(rng);
  }
  Image img(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) =
            0.5 + 0.4 * std::sin(fx[c] * x / w + ph[c]) * std::cos(fy[c] * y / h);
  return img;
}

inline Image make_random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& p : img.pixels) p = u(rng);
  return img;
}

}  // namespace oracles
