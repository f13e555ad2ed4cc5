#pragma once

#include <vector>

#include "lightbsr/image.hpp"
#include "lightbsr/pca.hpp"
#include "lightbsr/tensor.hpp"

namespace lightbsr {

// Degradation reference prior stretched to patch dimensions:
// channels 0..t-1 hold the PCA projection, channels t..t+2 the noise level
// (sigma in [0,255] units). Every channel is spatially constant.
struct DRPTensor {
  int t = 0;
  Tensor values;  // [t+3, h, w]
};

DRPTensor build_drp(const BlurKernel& kernel, double noise_sigma,
                    const PCABasis& basis, int h, int w);

// Channel-wise concatenation [patch; drp] -> (t+6) x H x W per positive patch.
std::vector<Tensor> assemble_teacher_input(const std::vector<Image>& patches,
                                           const DRPTensor& drp);

// Single-patch variant of the above.
Tensor concat_patch_drp(const Image& patch, const DRPTensor& drp);

// 3 x H x W tensor view of an image (copies).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

}  // namespace lightbsr
