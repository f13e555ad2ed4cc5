#include "lightbsr/drp.hpp"

#include <stdexcept>

namespace lightbsr {

DRPTensor build_drp(const BlurKernel& kernel, double noise_sigma,
                    const PCABasis& basis, int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("bad DRP dims");
  const std::vector<double> proj = project_kernel(kernel, basis);
  DRPTensor drp;
  drp.t = basis.t;
  drp.values = Tensor({basis.t + 3, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < basis.t + 3; ++c) {
    const double v = c < basis.t ? proj[static_cast<std::size_t>(c)] : noise_sigma;
    double* dst = drp.values.ptr() + static_cast<std::size_t>(c) * plane;
    std::fill(dst, dst + plane, v);
  }
  return drp;
}

Tensor concat_patch_drp(const Image& patch, const DRPTensor& drp) {
  const int h = static_cast<int>(drp.values.dim(1));
  const int w = static_cast<int>(drp.values.dim(2));
  if (patch.height != h || patch.width != w)
    throw std::invalid_argument("patch dims do not match DRP dims");
  Tensor out({drp.t + 6, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::copy(patch.pixels.begin(), patch.pixels.end(), out.data.begin());
  std::copy(drp.values.data.begin(), drp.values.data.end(),
            out.data.begin() + 3 * plane);
  return out;
}

std::vector<Tensor> assemble_teacher_input(const std::vector<Image>& patches,
                                           const DRPTensor& drp) {
  std::vector<Tensor> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(concat_patch_drp(p, drp));
  return out;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({3, img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), t.data.begin());
  return t;
}

Image tensor_to_image(const Tensor& t) {
  if (t.ndim() != 3 || t.dim(0) != 3) throw std::invalid_argument("expected 3xHxW");
  Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
  std::copy(t.data.begin(), t.data.end(), img.pixels.begin());
  return img;
}

}  // namespace lightbsr
