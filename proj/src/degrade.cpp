#include "lightbsr/degrade.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lightbsr/kernels.hpp"
#include "nlohmann/json.hpp"

namespace lightbsr {

BlurKernel DegradationSpec::make_kernel() const {
  if (kind == KernelKind::isotropic)
    return make_isotropic_kernel(width, kernel_size);
  return make_anisotropic_kernel(eig1, eig2, angle, kernel_size);
}

std::string DegradationSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind == KernelKind::isotropic ? "isotropic" : "anisotropic";
  j["width"] = width;
  j["eig1"] = eig1;
  j["eig2"] = eig2;
  j["angle"] = angle;
  j["noise_sigma"] = noise_sigma;
  j["scale"] = scale;
  j["kernel_size"] = kernel_size;
  return j.dump(2);
}

DegradationSpec DegradationSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DegradationSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "isotropic")
    s.kind = KernelKind::isotropic;
  else if (kind == "anisotropic")
    s.kind = KernelKind::anisotropic;
  else
    throw std::runtime_error("unknown kernel kind: " + kind);
  s.width = j.value("width", 0.0);
  s.eig1 = j.value("eig1", 0.0);
  s.eig2 = j.value("eig2", 0.0);
  s.angle = j.value("angle", 0.0);
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.scale = j.value("scale", 4);
  s.kernel_size = j.value("kernel_size", 21);
  return s;
}

std::optional<std::string> validate_spec(const DegradationSpec& spec,
                                         DegradationSetting setting) {
  if (spec.scale < 1) return "scale must be >= 1";
  if (spec.kernel_size < 3 || spec.kernel_size % 2 == 0)
    return "kernel size must be odd and >= 3";
  if (setting == DegradationSetting::setting1) {
    if (spec.kind != KernelKind::isotropic)
      return "setting1 only contains isotropic kernels";
    if (spec.width < 0.2 || spec.width > 4.0)
      return "setting1 kernel width must lie in [0.2, 4.0]";
    if (spec.noise_sigma != 0.0) return "setting1 is noise-free";
  } else {
    if (spec.kind == KernelKind::anisotropic) {
      if (spec.eig1 < 0.2 || spec.eig1 > 4.0 || spec.eig2 < 0.2 || spec.eig2 > 4.0)
        return "setting2 eigenvalues must lie in [0.2, 4]";
      if (spec.angle < 0.0 || spec.angle >= M_PI)
        return "setting2 angle must lie in [0, pi)";
    } else if (spec.width < 0.2 || spec.width > 4.0) {
      return "setting2 isotropic width must lie in [0.2, 4]";
    }
    if (spec.noise_sigma < 0.0 || spec.noise_sigma > 25.0)
      return "setting2 noise sigma must lie in [0, 25]";
  }
  return std::nullopt;
}

DegradationSpec sample_spec(DegradationSetting setting, int scale,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DegradationSpec s;
  s.scale = scale;
  if (setting == DegradationSetting::setting1) {
    s.kind = KernelKind::isotropic;
    s.width = std::uniform_real_distribution<double>(0.2, 4.0)(rng);
    s.noise_sigma = 0.0;
  } else {
    s.kind = KernelKind::anisotropic;
    std::uniform_real_distribution<double> eig(0.2, 4.0);
    s.eig1 = eig(rng);
    s.eig2 = eig(rng);
    s.angle = std::uniform_real_distribution<double>(0.0, M_PI)(rng);
    s.noise_sigma = std::uniform_real_distribution<double>(0.0, 25.0)(rng);
  }
  return s;
}

Image convolve_reflect(const Image& img, const BlurKernel& k) {
  const int half = k.size / 2;
  if (img.height <= half || img.width <= half)
    throw std::invalid_argument("image too small for reflect padding");
  const int ph = img.height + 2 * half;
  const int pw = img.width + 2 * half;

  // Reflect padding without repeating the edge sample.
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };

  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  Image out(img.height, img.width);
  std::vector<double> acc(static_cast<std::size_t>(img.width));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        padded[static_cast<std::size_t>(y) * pw + x] =
            img.at(c, reflect(y - half, img.height), reflect(x - half, img.width));
    for (int y = 0; y < img.height; ++y) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ky = 0; ky < k.size; ++ky) {
        const double* prow = padded.data() + static_cast<std::size_t>(y + ky) * pw;
        for (int kx = 0; kx < k.size; ++kx) {
          const double w = k.at(ky, kx);
          if (w != 0.0) kernels::axpy(w, prow + kx, acc.data(), acc.size());
        }
      }
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = acc[x];
    }
  }
  return out;
}

Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t seed) {
  if (spec.scale < 1) throw std::invalid_argument("invalid scale");
  const int ch = hr.height - hr.height % spec.scale;
  const int cw = hr.width - hr.width % spec.scale;
  if (ch < 1 || cw < 1) throw std::invalid_argument("image too small for scale");
  Image base = (ch == hr.height && cw == hr.width) ? hr : crop(hr, 0, 0, ch, cw);

  const BlurKernel k = spec.make_kernel();
  Image blurred = convolve_reflect(base, k);
  Image lr = spec.scale == 1 ? std::move(blurred)
                             : bicubic_downsample(blurred, spec.scale);

  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma / 255.0);
    for (double& p : lr.pixels) p += noise(rng);
  }
  return lr;
}

}  // namespace lightbsr
