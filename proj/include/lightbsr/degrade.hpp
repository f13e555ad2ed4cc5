#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "lightbsr/bicubic.hpp"
#include "lightbsr/blur_kernel.hpp"
#include "lightbsr/image.hpp"

namespace lightbsr {

enum class KernelKind { isotropic, anisotropic };

// Ground-truth degradation label: blur kernel parameters + noise + scale.
// noise_sigma is on the [0,255] intensity scale.
struct DegradationSpec {
  KernelKind kind = KernelKind::isotropic;
  double width = 0.0;       // isotropic sigma
  double eig1 = 0.0;        // anisotropic lambda1
  double eig2 = 0.0;        // anisotropic lambda2
  double angle = 0.0;       // radians in [0, pi)
  double noise_sigma = 0.0; // [0, 255] scale
  int scale = 4;
  int kernel_size = 21;

  BlurKernel make_kernel() const;
  std::string to_json() const;
  static DegradationSpec from_json(const std::string& text);
};

enum class DegradationSetting { setting1, setting2 };

// Validates a spec against the parameter ranges of a degradation setting.
// Returns an explanatory message on failure.
std::optional<std::string> validate_spec(const DegradationSpec& spec,
                                         DegradationSetting setting);

// Samples a random spec uniformly from a setting's parameter ranges.
DegradationSpec sample_spec(DegradationSetting setting, int scale,
                            std::uint64_t seed);

// 2-D convolution with reflect padding, applied per channel.
Image convolve_reflect(const Image& img, const BlurKernel& k);

// LR = bicubic_downsample(hr (*) k, s) + n. HR is cropped to the largest
// scale-divisible size first. Deterministic in (hr, spec, seed).
Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t seed);

}  // namespace lightbsr
