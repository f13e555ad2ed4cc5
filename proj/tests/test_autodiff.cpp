#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "lightbsr/autodiff.hpp"
#include "oracles.hpp"

using namespace lightbsr;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Central-difference gradient check of a scalar-valued function of `p`.
void grad_check(Param& p, const std::function<ad::Var()>& f, double tol = 1e-6,
                double eps = 1e-6) {
  p.zero_grad();
  ad::Var loss = f();
  REQUIRE(loss.value().numel() == 1);
  ad::backward(loss);
  Tensor analytic = p.grad;

  for (std::size_t i = 0; i < p.value.data.size(); ++i) {
    const double keep = p.value.data[i];
    p.value.data[i] = keep + eps;
    const double up = f().value()[0];
    p.value.data[i] = keep - eps;
    const double down = f().value()[0];
    p.value.data[i] = keep;
    const double fd = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(fd), std::abs(analytic.data[i]), 1e-4});
    CHECK(std::abs(fd - analytic.data[i]) / scale < tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a naive loop (stride, groups, reflect pad)") {
  const int n = 2, ci = 4, h = 6, w = 7, co = 6, k = 3;
  for (int stride : {1, 2}) {
    for (int groups : {1, 2}) {
      const Tensor x = random_tensor({n, ci, h, w}, 10 + stride);
      const Tensor wt = random_tensor({co, ci / groups, k, k}, 20 + groups);
      const Tensor b = random_tensor({co}, 30);
      Param px("x", x), pw("w", wt), pb("b", b);
      ad::Var out = ad::conv2d(ad::leaf(px), ad::leaf(pw), ad::leaf(pb), stride, groups);

      const int oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
      REQUIRE(out.value().shape == std::vector<std::int64_t>{n, co, oh, ow});
      const int r = k / 2;
      const int cig = ci / groups, cog = co / groups;
      for (int ni = 0; ni < n; ++ni)
        for (int oc = 0; oc < co; ++oc) {
          const int g = oc / cog;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double acc = b[static_cast<std::size_t>(oc)];
              for (int icg = 0; icg < cig; ++icg)
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx) {
                    const int iy = oracles::reflect_index(oy * stride + ky - r, h);
                    const int ix = oracles::reflect_index(ox * stride + kx - r, w);
                    acc += wt.at4(oc, icg, ky, kx) * x.at4(ni, g * cig + icg, iy, ix);
                  }
              CHECK(out.value().at4(ni, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-10));
            }
        }
    }
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  const Tensor x = random_tensor({1, 2, 5, 5}, 1);
  Param pw("w", random_tensor({3, 2, 3, 3}, 2));
  Param pb("b", random_tensor({3}, 3));
  Param px("x", x);
  auto f = [&] {
    return ad::mean_all(ad::square(
        ad::conv2d(ad::leaf(px), ad::leaf(pw), ad::leaf(pb), 2, 1)));
  };
  grad_check(pw, f);
  grad_check(pb, f);
  grad_check(px, f);
}

TEST_CASE("linear gradients match finite differences") {
  Param px("x", random_tensor({3, 4}, 4));
  Param pw("w", random_tensor({5, 4}, 5));
  Param pb("b", random_tensor({5}, 6));
  auto f = [&] {
    return ad::mean_all(ad::square(ad::linear(ad::leaf(px), ad::leaf(pw), ad::leaf(pb))));
  };
  grad_check(px, f);
  grad_check(pw, f);
  grad_check(pb, f);
}

TEST_CASE("elementwise op gradients") {
  Param p("x", random_tensor({2, 3, 4, 4}, 7));
  grad_check(p, [&] { return ad::mean_all(ad::gelu(ad::leaf(p))); });
  grad_check(p, [&] { return ad::mean_all(ad::sigmoid(ad::leaf(p))); });
  grad_check(p, [&] { return ad::mean_all(ad::square(ad::leaf(p))); });
  grad_check(p, [&] {
    return ad::mean_all(ad::mul(ad::leaf(p), ad::add_scalar(ad::leaf(p), 2.0)));
  });
  grad_check(p, [&] { return ad::sum_all(ad::scale(ad::leaf(p), -0.7)); });
  // abs and leaky_relu are non-smooth at 0; the random values avoid it.
  grad_check(p, [&] { return ad::mean_all(ad::abs(ad::leaf(p))); });
  grad_check(p, [&] { return ad::mean_all(ad::leaky_relu(ad::leaf(p), 0.1)); });
}

TEST_CASE("channel/shape op gradients") {
  Param p("x", random_tensor({2, 8, 4, 4}, 8));
  Param g("g", random_tensor({2, 8}, 9));
  grad_check(p, [&] {
    return ad::mean_all(ad::square(ad::scale_channels(ad::leaf(p), ad::leaf(g))));
  });
  grad_check(g, [&] {
    return ad::mean_all(ad::square(ad::scale_channels(ad::leaf(p), ad::leaf(g))));
  });
  grad_check(p, [&] {
    ad::Var a = ad::slice_channels(ad::leaf(p), 0, 2);
    ad::Var b = ad::slice_channels(ad::leaf(p), 2, 8);
    return ad::mean_all(ad::square(ad::concat_channels(b, a)));
  });
  grad_check(p, [&] {
    return ad::mean_all(ad::square(ad::pixel_shuffle(ad::leaf(p), 2)));
  });
  grad_check(p, [&] {
    return ad::mean_all(ad::square(ad::global_avg_pool(ad::leaf(p))));
  });
  grad_check(p, [&] {
    return ad::mean_all(ad::square(ad::reshape(ad::leaf(p), {2, 128})));
  });
}

TEST_CASE("layer norm gradients") {
  Param p("x", random_tensor({2, 6, 3, 3}, 10));
  Param gamma("g", random_tensor({6}, 11, 0.5, 1.5));
  Param beta("b", random_tensor({6}, 12));
  auto f = [&] {
    return ad::mean_all(ad::square(
        ad::layer_norm_channels(ad::leaf(p), ad::leaf(gamma), ad::leaf(beta))));
  };
  grad_check(p, f, 1e-5);
  grad_check(gamma, f, 1e-5);
  grad_check(beta, f, 1e-5);
}

TEST_CASE("row-matrix op gradients") {
  Param a("a", random_tensor({3, 5}, 13));
  Param b("b", random_tensor({4, 5}, 14));
  grad_check(a, [&] {
    return ad::mean_all(ad::square(ad::matmul_nt(ad::leaf(a), ad::leaf(b))));
  });
  grad_check(b, [&] {
    return ad::mean_all(ad::square(ad::matmul_nt(ad::leaf(a), ad::leaf(b))));
  });
  grad_check(a, [&] { return ad::mean_all(ad::square(ad::l2_normalize_rows(ad::leaf(a)))); });
  Param c("c", random_tensor({3, 5}, 15));
  grad_check(a, [&] {
    return ad::mean_all(ad::square(ad::rowwise_dot(ad::leaf(a), ad::leaf(c))));
  });
  grad_check(a, [&] {
    return ad::mean_all(ad::square(ad::concat_cols(ad::leaf(a), ad::leaf(c))));
  });
  grad_check(a, [&] { return ad::mean_all(ad::logsumexp_rows(ad::leaf(a))); });
  grad_check(a, [&] {
    return ad::mean_all(ad::square(ad::log_softmax_rows(ad::leaf(a))));
  });
}

TEST_CASE("pixel shuffle rearranges channels to space") {
  Tensor x({1, 4, 2, 2});
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(i);
  ad::Var y = ad::pixel_shuffle(ad::constant(x), 2);
  REQUIRE(y.value().shape == std::vector<std::int64_t>{1, 1, 4, 4});
  // output[y, x] = input[r*ry + rx, y/2, x/2] with r = 2
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) {
      const int c = (oy % 2) * 2 + (ox % 2);
      CHECK(y.value().at4(0, 0, oy, ox) == x.at4(0, c, oy / 2, ox / 2));
    }
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Param p("x", random_tensor({4}, 16));
  grad_check(p, [&] {
    ad::Var x = ad::leaf(p);
    return ad::sum_all(ad::mul(x, x));  // d/dx x^2 = 2x via two paths
  });
}

TEST_CASE("log_softmax rows are shift invariant") {
  Tensor x = random_tensor({2, 6}, 17);
  Tensor shifted = x;
  for (std::int64_t r = 0; r < 2; ++r)
    for (std::int64_t c = 0; c < 6; ++c) shifted.at2(r, c) += 3.7;
  const Tensor a = ad::log_softmax_rows(ad::constant(x)).value();
  const Tensor b = ad::log_softmax_rows(ad::constant(shifted)).value();
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));
}
