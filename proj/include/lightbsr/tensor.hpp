#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace lightbsr {

// Dense row-major tensor of doubles. Shapes are small (<= 5 dims in practice).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::int64_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t ndim() const { return shape.size(); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 4-D accessor [n][c][h][w]
  double& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    assert(shape.size() == 4);
    return data[static_cast<std::size_t>(
        ((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return const_cast<Tensor*>(this)->at4(n, c, h, w);
  }
  double& at2(std::int64_t r, std::int64_t c) {
    assert(shape.size() == 2);
    return data[static_cast<std::size_t>(r * shape[1] + c)];
  }
  double at2(std::int64_t r, std::int64_t c) const {
    return const_cast<Tensor*>(this)->at2(r, c);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace lightbsr
