#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "lightbsr/bicubic.hpp"
#include "lightbsr/blur_kernel.hpp"
#include "lightbsr/degrade.hpp"
#include "oracles.hpp"

using namespace lightbsr;

TEST_CASE("isotropic kernels are normalized and non-negative") {
  for (double w : {0.2, 0.7, 1.3, 2.6, 4.0}) {
    const BlurKernel k = make_isotropic_kernel(w, 21);
    CHECK(k.size == 21);
    CHECK(std::abs(k.sum() - 1.0) < 1e-8);
    for (double v : k.weights) CHECK(v >= 0.0);
  }
  CHECK_THROWS(make_isotropic_kernel(-0.1, 21));
}

TEST_CASE("width zero gives the delta kernel") {
  const BlurKernel k = make_isotropic_kernel(0.0, 21);
  const BlurKernel d = make_delta_kernel(21);
  for (std::size_t i = 0; i < k.weights.size(); ++i) CHECK(k.weights[i] == d.weights[i]);
  CHECK(d.at(10, 10) == 1.0);
}

TEST_CASE("anisotropic with equal eigenvalues degenerates to isotropic") {
  for (double w : {0.4, 1.1, 3.3}) {
    const BlurKernel iso = make_isotropic_kernel(w, 21);
    for (double angle : {0.0, 0.9, 2.2}) {
      const BlurKernel an = make_anisotropic_kernel(w * w, w * w, angle, 21);
      for (std::size_t i = 0; i < iso.weights.size(); ++i)
        CHECK(std::abs(an.weights[i] - iso.weights[i]) < 1e-10);
    }
  }
}

TEST_CASE("anisotropic kernels are pi-periodic in the angle") {
  const BlurKernel a = make_anisotropic_kernel(2.0, 0.5, 0.7, 21);
  const BlurKernel b = make_anisotropic_kernel(2.0, 0.5, 0.7 + M_PI, 21);
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    CHECK(std::abs(a.weights[i] - b.weights[i]) < 1e-10);
}

TEST_CASE("kernel text round trip is lossless") {
  const BlurKernel k = make_anisotropic_kernel(3.1, 0.9, 1.2, 21);
  const BlurKernel back = kernel_from_text(kernel_to_text(k));
  REQUIRE(back.size == k.size);
  for (std::size_t i = 0; i < k.weights.size(); ++i) CHECK(back.weights[i] == k.weights[i]);
}

TEST_CASE("spec validation enforces the setting ranges") {
  DegradationSpec s;
  s.kind = KernelKind::isotropic;
  s.width = 2.0;
  CHECK(!validate_spec(s, DegradationSetting::setting1).has_value());
  s.width = 9.0;
  CHECK(validate_spec(s, DegradationSetting::setting1).has_value());
  s.width = 2.0;
  s.noise_sigma = 10.0;  // setting1 is noise-free
  CHECK(validate_spec(s, DegradationSetting::setting1).has_value());

  DegradationSpec a;
  a.kind = KernelKind::anisotropic;
  a.eig1 = 2.0;
  a.eig2 = 1.0;
  a.angle = 0.5;
  a.noise_sigma = 10.0;
  CHECK(!validate_spec(a, DegradationSetting::setting2).has_value());
  a.noise_sigma = 26.0;
  CHECK(validate_spec(a, DegradationSetting::setting2).has_value());
}

TEST_CASE("sampled specs always validate; setting1 isotropic, setting2 anisotropic") {
  bool saw_noise = false;
  for (int i = 0; i < 200; ++i) {
    const auto s1 = sample_spec(DegradationSetting::setting1, 4, 100 + i);
    CHECK(!validate_spec(s1, DegradationSetting::setting1).has_value());
    CHECK(s1.kind == KernelKind::isotropic);
    CHECK(s1.noise_sigma == 0.0);
    const auto s2 = sample_spec(DegradationSetting::setting2, 4, 200 + i);
    CHECK(!validate_spec(s2, DegradationSetting::setting2).has_value());
    CHECK(s2.kind == KernelKind::anisotropic);
    saw_noise |= s2.noise_sigma > 0.0;
  }
  CHECK(saw_noise);
}

TEST_CASE("spec JSON round trip") {
  DegradationSpec s;
  s.kind = KernelKind::anisotropic;
  s.eig1 = 1.7;
  s.eig2 = 0.4;
  s.angle = 2.1;
  s.noise_sigma = 12.5;
  s.scale = 2;
  const DegradationSpec back = DegradationSpec::from_json(s.to_json());
  CHECK(back.kind == s.kind);
  CHECK(back.eig1 == s.eig1);
  CHECK(back.eig2 == s.eig2);
  CHECK(back.angle == s.angle);
  CHECK(back.noise_sigma == s.noise_sigma);
  CHECK(back.scale == s.scale);
}

TEST_CASE("convolve_reflect matches the naive per-pixel oracle") {
  const Image img = oracles::make_random_image(17, 23, 7);
  const BlurKernel k = make_anisotropic_kernel(1.5, 0.6, 0.3, 9);
  const Image fast = convolve_reflect(img, k);
  const Image slow = oracles::naive_convolve(img, k);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(fast.pixels[i] == doctest::Approx(slow.pixels[i]).epsilon(1e-10));
}

TEST_CASE("delta kernel + zero noise degrade equals standalone bicubic") {
  const Image hr = oracles::make_test_image(64, 80, 11);
  DegradationSpec s;
  s.kind = KernelKind::isotropic;
  s.width = 0.0;
  s.scale = 4;
  const Image lr = degrade(hr, s, 0);
  const Image want = bicubic_downsample(hr, 4);
  REQUIRE(lr.height == want.height);
  REQUIRE(lr.width == want.width);
  for (std::size_t i = 0; i < lr.pixels.size(); ++i) CHECK(lr.pixels[i] == want.pixels[i]);
}

TEST_CASE("degrade crops to the largest scale-divisible size") {
  const Image hr = oracles::make_test_image(67, 81, 12);
  DegradationSpec s;
  s.width = 1.0;
  s.scale = 4;
  const Image lr = degrade(hr, s, 0);
  CHECK(lr.height == 16);
  CHECK(lr.width == 20);
}

TEST_CASE("noise statistics pass a 3-sigma Monte Carlo check") {
  // Constant image + delta kernel isolates the additive noise exactly.
  const Image hr = make_constant_image(128, 128, 0.5);
  DegradationSpec s;
  s.width = 0.0;
  s.noise_sigma = 15.0;
  s.scale = 1;
  const Image lr = degrade(hr, s, 42);
  const double sigma = 15.0 / 255.0;
  const auto n = static_cast<double>(lr.pixels.size());

  double mean = 0.0;
  for (std::size_t i = 0; i < lr.pixels.size(); ++i) mean += lr.pixels[i] - 0.5;
  mean /= n;
  // mean of n iid N(0, sigma^2) has sd sigma/sqrt(n)
  CHECK(std::abs(mean) < 3.0 * sigma / std::sqrt(n));

  double var = 0.0;
  for (std::size_t i = 0; i < lr.pixels.size(); ++i) {
    const double d = lr.pixels[i] - 0.5 - mean;
    var += d * d;
  }
  var /= (n - 1.0);
  // sample variance sd approx sigma^2 * sqrt(2/(n-1))
  CHECK(std::abs(var - sigma * sigma) < 3.0 * sigma * sigma * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("degradation is deterministic in (hr, spec, seed)") {
  const Image hr = oracles::make_test_image(32, 32, 5);
  DegradationSpec s;
  s.width = 1.4;
  s.noise_sigma = 10.0;
  s.scale = 4;
  const Image a = degrade(hr, s, 9);
  const Image b = degrade(hr, s, 9);
  const Image c = degrade(hr, s, 10);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("bicubic preserves constants and matches the closed-form psnr example") {
  const Image c = make_constant_image(32, 48, 0.37);
  const Image down = bicubic_downsample(c, 4);
  for (double v : down.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
  const Image up = bicubic_upsample(down, 4);
  for (double v : up.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}
