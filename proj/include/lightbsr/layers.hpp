#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lightbsr/autodiff.hpp"

namespace lightbsr {

// Deterministic fan-in-scaled uniform initializer shared by all layers of a
// model instance.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

 private:
  std::mt19937_64 rng_;
};

// Creates a trainable leaf when train == true, a constant otherwise.
inline ad::Var pvar(Param& p, bool train) {
  return train ? ad::leaf(p) : ad::constant(p.value);
}

struct Conv2d {
  Param w;
  Param b;
  int stride = 1;
  int groups = 1;

  // zero_init pins the layer to an exact zero map (used for sigmoid gates).
  Conv2d(const std::string& name, int out_ch, int in_ch, int k, InitRng& rng,
         int stride_ = 1, int groups_ = 1, bool zero_init = false);

  ad::Var forward(const ad::Var& x, bool train);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
  std::int64_t param_count() const { return w.value.numel() + b.value.numel(); }
  // multiply-accumulate count for an out_h x out_w output plane
  std::int64_t macs(std::int64_t out_h, std::int64_t out_w) const {
    return out_h * out_w * w.value.numel();
  }
};

struct Linear {
  Param w;
  Param b;

  Linear(const std::string& name, int out_f, int in_f, InitRng& rng,
         bool zero_init = false);

  ad::Var forward(const ad::Var& x, bool train);
  void collect(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
  std::int64_t param_count() const { return w.value.numel() + b.value.numel(); }
  std::int64_t macs() const { return w.value.numel(); }
};

// Depthwise 7x7 conv -> channel layer norm -> pointwise expansion -> GELU ->
// pointwise contraction. The residual connection is optional so callers can
// substitute their own (the adaptation block routes its block input through
// it instead).
struct ConvNeXtBlock {
  Conv2d dw;
  Param ln_gamma;
  Param ln_beta;
  Conv2d pw1;
  Conv2d pw2;
  bool internal_residual = true;

  ConvNeXtBlock(const std::string& name, int channels, int expansion,
                InitRng& rng, bool internal_residual_ = true);

  ad::Var forward(const ad::Var& x, bool train);
  void collect(std::vector<Param*>& out);
  std::int64_t param_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
};

}  // namespace lightbsr
