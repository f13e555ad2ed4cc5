#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lightbsr/blur_kernel.hpp"
#include "lightbsr/tensor.hpp"

namespace lightbsr {

// PCA basis over vectorized k x k blur kernels. Rows of `components` are the
// top-t principal directions (orthonormal, sign-fixed so the largest-magnitude
// entry of each row is positive).
struct PCABasis {
  int t = 0;
  int kernel_size = 0;
  std::uint64_t corpus_hash = 0;
  Tensor mean;        // [k*k]
  Tensor components;  // [t, k*k]
};

PCABasis fit_pca_basis(const std::vector<BlurKernel>& kernels, int t);

// components * (vec(kernel) - mean), a t-vector.
std::vector<double> project_kernel(const BlurKernel& kernel, const PCABasis& basis);

// mean + components^T * projection, as a k*k vector (not renormalized).
std::vector<double> reconstruct_kernel(const std::vector<double>& projection,
                                       const PCABasis& basis);

// Text header (t, k, corpus hash, sign convention tag) + binary doubles.
void save_pca_basis(const std::string& path, const PCABasis& basis);
PCABasis load_pca_basis(const std::string& path);

std::uint64_t pca_basis_hash(const PCABasis& basis);

}  // namespace lightbsr
