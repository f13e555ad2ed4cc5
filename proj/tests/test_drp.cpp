#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "lightbsr/degrade.hpp"
#include "lightbsr/drp.hpp"
#include "lightbsr/pca.hpp"
#include "oracles.hpp"

using namespace lightbsr;

namespace {

std::vector<BlurKernel> sample_kernels(int n, std::uint64_t seed) {
  std::vector<BlurKernel> out;
  for (int i = 0; i < n; ++i)
    out.push_back(sample_spec(DegradationSetting::setting2, 4,
                              seed + static_cast<std::uint64_t>(i))
                      .make_kernel());
  return out;
}

}  // namespace

TEST_CASE("pca components are orthonormal with the documented sign convention") {
  const auto kernels = sample_kernels(300, 1);
  const PCABasis basis = fit_pca_basis(kernels, 15);
  REQUIRE(basis.t == 15);
  REQUIRE(basis.kernel_size == 21);
  const int kk = 21 * 21;
  for (int i = 0; i < basis.t; ++i) {
    for (int j = 0; j < basis.t; ++j) {
      double dot = 0.0;
      for (int l = 0; l < kk; ++l)
        dot += basis.components.at2(i, l) * basis.components.at2(j, l);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-9);
    }
    double max_abs = 0.0, max_val = 0.0;
    for (int l = 0; l < kk; ++l) {
      const double v = basis.components.at2(i, l);
      if (std::abs(v) > max_abs) {
        max_abs = std::abs(v);
        max_val = v;
      }
    }
    CHECK(max_val > 0.0);
  }
}

TEST_CASE("pca eigen-decomposition matches an independent jacobi oracle") {
  // Small kernels keep the covariance tractable for the dense oracle.
  std::vector<BlurKernel> kernels;
  for (int i = 0; i < 120; ++i) {
    const auto s = sample_spec(DegradationSetting::setting2, 4, 700 + i);
    kernels.push_back(s.kind == KernelKind::isotropic
                          ? make_isotropic_kernel(s.width, 7)
                          : make_anisotropic_kernel(s.eig1, s.eig2, s.angle, 7));
  }
  const int kk = 49, t = 6;
  const PCABasis basis = fit_pca_basis(kernels, t);

  // Oracle covariance (sample, n-1 normalization) + Jacobi.
  std::vector<double> mean(kk, 0.0);
  for (const auto& k : kernels)
    for (int l = 0; l < kk; ++l) mean[l] += k.weights[l];
  for (double& m : mean) m /= static_cast<double>(kernels.size());
  std::vector<double> cov(static_cast<std::size_t>(kk) * kk, 0.0);
  for (const auto& k : kernels)
    for (int i = 0; i < kk; ++i)
      for (int j = 0; j < kk; ++j)
        cov[static_cast<std::size_t>(i) * kk + j] +=
            (k.weights[i] - mean[i]) * (k.weights[j] - mean[j]);
  for (double& c : cov) c /= static_cast<double>(kernels.size() - 1);

  std::vector<double> evals, evecs;
  oracles::jacobi_eigh(cov, kk, &evals, &evecs);

  for (int l = 0; l < kk; ++l) CHECK(std::abs(basis.mean[l] - mean[l]) < 1e-12);
  for (int i = 0; i < t; ++i) {
    // Sign-align the oracle eigenvector before comparing.
    double dot = 0.0;
    for (int l = 0; l < kk; ++l)
      dot += basis.components.at2(i, l) * evecs[static_cast<std::size_t>(l) * kk + i];
    const double sign = dot >= 0 ? 1.0 : -1.0;
    for (int l = 0; l < kk; ++l)
      CHECK(std::abs(basis.components.at2(i, l) -
                     sign * evecs[static_cast<std::size_t>(l) * kk + i]) < 1e-7);
  }
}

TEST_CASE("reconstruct-then-project is idempotent") {
  const auto kernels = sample_kernels(300, 2);
  const PCABasis basis = fit_pca_basis(kernels, 15);
  const BlurKernel probe = make_anisotropic_kernel(2.5, 0.8, 1.0, 21);
  const auto proj = project_kernel(probe, basis);
  REQUIRE(proj.size() == 15);
  const auto rec = reconstruct_kernel(proj, basis);
  BlurKernel rk;
  rk.size = 21;
  rk.weights = rec;
  const auto proj2 = project_kernel(rk, basis);
  for (int i = 0; i < 15; ++i) CHECK(std::abs(proj[i] - proj2[i]) < 1e-8);
}

TEST_CASE("pca basis file round trip preserves everything") {
  const auto kernels = sample_kernels(100, 3);
  const PCABasis basis = fit_pca_basis(kernels, 10);
  const std::string path = "test_basis.pca";
  save_pca_basis(path, basis);
  const PCABasis back = load_pca_basis(path);
  CHECK(back.t == basis.t);
  CHECK(back.kernel_size == basis.kernel_size);
  CHECK(back.corpus_hash == basis.corpus_hash);
  CHECK(back.mean.data == basis.mean.data);
  CHECK(back.components.data == basis.components.data);
  CHECK(pca_basis_hash(back) == pca_basis_hash(basis));
  std::remove(path.c_str());
}

TEST_CASE("drp has t+3 constant channels with the noise level replicated") {
  const auto kernels = sample_kernels(300, 4);
  const PCABasis basis = fit_pca_basis(kernels, 15);
  const BlurKernel k = make_isotropic_kernel(1.8, 21);
  const DRPTensor drp = build_drp(k, 12.5, basis, 24, 40);

  REQUIRE(drp.t == 15);
  REQUIRE(drp.values.shape == std::vector<std::int64_t>{18, 24, 40});

  const auto proj = project_kernel(k, basis);
  for (int c = 0; c < 18; ++c) {
    const double want = c < 15 ? proj[static_cast<std::size_t>(c)] : 12.5;
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 40; ++x) {
        const double v = drp.values.data[(static_cast<std::size_t>(c) * 24 + y) * 40 + x];
        CHECK(v == want);  // exactly constant: zero spatial variance
      }
  }
}

TEST_CASE("teacher input concatenation stacks patch then drp") {
  const auto kernels = sample_kernels(100, 5);
  const PCABasis basis = fit_pca_basis(kernels, 15);
  const Image patch = oracles::make_random_image(16, 16, 6);
  const DRPTensor drp = build_drp(make_isotropic_kernel(1.0, 21), 0.0, basis, 16, 16);
  const Tensor t = concat_patch_drp(patch, drp);
  REQUIRE(t.shape == std::vector<std::int64_t>{21, 16, 16});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        CHECK(t.data[(static_cast<std::size_t>(c) * 16 + y) * 16 + x] == patch.at(c, y, x));

  const auto inputs = assemble_teacher_input({patch, patch}, drp);
  CHECK(inputs.size() == 2);
  CHECK(inputs[0].shape == t.shape);
}

TEST_CASE("image/tensor conversion round trips") {
  const Image img = oracles::make_random_image(9, 13, 8);
  const Image back = tensor_to_image(image_to_tensor(img));
  CHECK(back.pixels == img.pixels);
}
