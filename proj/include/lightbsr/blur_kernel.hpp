#pragma once

#include <string>
#include <vector>

namespace lightbsr {

// Normalized 2-D blur kernel sampled on a centered integer grid.
// Invariants: all weights >= 0, sum == 1 (within 1e-8 after construction).
struct BlurKernel {
  int size = 0;                 // odd
  std::vector<double> weights;  // size * size, row-major

  double& at(int y, int x) { return weights[static_cast<std::size_t>(y) * size + x]; }
  double at(int y, int x) const {
    return weights[static_cast<std::size_t>(y) * size + x];
  }
  double sum() const;
};

// Isotropic Gaussian exp(-(x^2+y^2)/(2 width^2)), normalized to sum 1.
// width == 0 returns the discrete delta kernel; width < 0 throws.
BlurKernel make_isotropic_kernel(double width, int size);

// Bivariate Gaussian N(0, Sigma) with Sigma = R(angle) diag(eig1, eig2) R(angle)^T.
BlurKernel make_anisotropic_kernel(double eig1, double eig2, double angle, int size);

BlurKernel make_delta_kernel(int size);

// Plain-text export: one row per line, full precision decimal.
std::string kernel_to_text(const BlurKernel& k);
BlurKernel kernel_from_text(const std::string& text);

}  // namespace lightbsr
