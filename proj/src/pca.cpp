#include "lightbsr/pca.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lightbsr {

namespace {

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

PCABasis fit_pca_basis(const std::vector<BlurKernel>& kernels, int t) {
  if (t < 1) throw std::invalid_argument("t must be positive");
  if (kernels.size() < static_cast<std::size_t>(t) + 1)
    throw std::invalid_argument("insufficient samples: need at least t+1 kernels");
  const int size = kernels.front().size;
  const int dim = size * size;
  if (t >= dim) throw std::invalid_argument("t must be smaller than k^2");
  for (const auto& k : kernels)
    if (k.size != size) throw std::invalid_argument("kernel size mismatch in corpus");

  const auto n = static_cast<Eigen::Index>(kernels.size());
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = kernels[static_cast<std::size_t>(i)].weights[j];

  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");

  PCABasis basis;
  basis.t = t;
  basis.kernel_size = size;
  basis.mean = Tensor({dim});
  for (int j = 0; j < dim; ++j) basis.mean[static_cast<std::size_t>(j)] = mean(j);
  basis.components = Tensor({t, dim});
  // Eigenvalues come out ascending; take the top t in descending order.
  for (int r = 0; r < t; ++r) {
    Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - r);
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    for (int j = 0; j < dim; ++j) basis.components.at2(r, j) = v(j);
  }

  std::uint64_t h = fnv1a(&n, sizeof(n));
  h = fnv1a(x.data(), 0, h);  // corpus identity: hash raw kernel weights
  for (const auto& k : kernels)
    h = fnv1a(k.weights.data(), k.weights.size() * sizeof(double), h);
  basis.corpus_hash = h;
  return basis;
}

std::vector<double> project_kernel(const BlurKernel& kernel, const PCABasis& basis) {
  const int dim = basis.kernel_size * basis.kernel_size;
  if (kernel.size != basis.kernel_size)
    throw std::invalid_argument("kernel size does not match basis");
  std::vector<double> centered(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j)
    centered[static_cast<std::size_t>(j)] = kernel.weights[j] - basis.mean[static_cast<std::size_t>(j)];
  std::vector<double> out(static_cast<std::size_t>(basis.t), 0.0);
  for (int r = 0; r < basis.t; ++r) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += basis.components.at2(r, j) * centered[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(r)] = s;
  }
  return out;
}

std::vector<double> reconstruct_kernel(const std::vector<double>& projection,
                                       const PCABasis& basis) {
  if (projection.size() != static_cast<std::size_t>(basis.t))
    throw std::invalid_argument("projection length does not match basis");
  const int dim = basis.kernel_size * basis.kernel_size;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) out[static_cast<std::size_t>(j)] = basis.mean[static_cast<std::size_t>(j)];
  for (int r = 0; r < basis.t; ++r)
    for (int j = 0; j < dim; ++j)
      out[static_cast<std::size_t>(j)] += basis.components.at2(r, j) * projection[static_cast<std::size_t>(r)];
  return out;
}

void save_pca_basis(const std::string& path, const PCABasis& basis) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  char header[128];
  std::snprintf(header, sizeof(header), "LBSRPCA1 t=%d k=%d corpus=%016llx sign=maxabs-positive\n",
                basis.t, basis.kernel_size,
                static_cast<unsigned long long>(basis.corpus_hash));
  out << header;
  out.write(reinterpret_cast<const char*>(basis.mean.ptr()),
            static_cast<std::streamsize>(basis.mean.data.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(basis.components.ptr()),
            static_cast<std::streamsize>(basis.components.data.size() * sizeof(double)));
}

PCABasis load_pca_basis(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(in, header);
  PCABasis basis;
  unsigned long long corpus = 0;
  if (std::sscanf(header.c_str(), "LBSRPCA1 t=%d k=%d corpus=%llx", &basis.t,
                  &basis.kernel_size, &corpus) != 3)
    throw std::runtime_error("malformed basis header in " + path);
  basis.corpus_hash = corpus;
  const int dim = basis.kernel_size * basis.kernel_size;
  basis.mean = Tensor({dim});
  basis.components = Tensor({basis.t, dim});
  in.read(reinterpret_cast<char*>(basis.mean.ptr()),
          static_cast<std::streamsize>(basis.mean.data.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(basis.components.ptr()),
          static_cast<std::streamsize>(basis.components.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated basis file " + path);
  return basis;
}

std::uint64_t pca_basis_hash(const PCABasis& basis) {
  std::uint64_t h = fnv1a(&basis.t, sizeof(basis.t));
  h = fnv1a(&basis.kernel_size, sizeof(basis.kernel_size), h);
  h = fnv1a(basis.mean.ptr(), basis.mean.data.size() * sizeof(double), h);
  h = fnv1a(basis.components.ptr(), basis.components.data.size() * sizeof(double), h);
  return h;
}

}  // namespace lightbsr
