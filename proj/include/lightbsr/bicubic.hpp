#pragma once

#include "lightbsr/image.hpp"

namespace lightbsr {

// Keys cubic convolution weight with a = -0.5, support [-2, 2].
double cubic_weight(double x);

// Separable bicubic resampling to an arbitrary target size. When an axis is
// shrunk the kernel support is widened by the shrink factor (antialiasing)
// and tap weights are renormalized per output pixel, so constants are
// reproduced exactly. Boundary handling is symmetric (reflect incl. edge).
Image bicubic_resize(const Image& img, int out_h, int out_w);

// Downsample by an integer scale; input dims must be divisible by scale
// (callers crop beforehand, see degrade()). scale < 1 throws.
Image bicubic_downsample(const Image& img, int scale);

// Upsample by an integer scale (used for baseline comparisons).
Image bicubic_upsample(const Image& img, int scale);

}  // namespace lightbsr
