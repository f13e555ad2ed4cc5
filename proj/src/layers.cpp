#include "lightbsr/layers.hpp"

#include <cmath>

namespace lightbsr {

namespace {

Tensor init_uniform(std::vector<std::int64_t> shape, std::int64_t fan_in,
                    InitRng& rng, bool zero_init) {
  Tensor t(std::move(shape));
  if (!zero_init) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  }
  return t;
}

}  // namespace

Conv2d::Conv2d(const std::string& name, int out_ch, int in_ch, int k, InitRng& rng,
               int stride_, int groups_, bool zero_init)
    : w(name + ".w",
        init_uniform({out_ch, in_ch / groups_, k, k},
                     static_cast<std::int64_t>(in_ch / groups_) * k * k, rng,
                     zero_init)),
      b(name + ".b", Tensor({out_ch})),
      stride(stride_),
      groups(groups_) {}

ad::Var Conv2d::forward(const ad::Var& x, bool train) {
  return ad::conv2d(x, pvar(w, train), pvar(b, train), stride, groups);
}

Linear::Linear(const std::string& name, int out_f, int in_f, InitRng& rng,
               bool zero_init)
    : w(name + ".w", init_uniform({out_f, in_f}, in_f, rng, zero_init)),
      b(name + ".b", Tensor({out_f})) {}

ad::Var Linear::forward(const ad::Var& x, bool train) {
  return ad::linear(x, pvar(w, train), pvar(b, train));
}

ConvNeXtBlock::ConvNeXtBlock(const std::string& name, int channels, int expansion,
                             InitRng& rng, bool internal_residual_)
    : dw(name + ".dw", channels, channels, 7, rng, 1, channels),
      ln_gamma(name + ".ln_gamma", Tensor::full({channels}, 1.0)),
      ln_beta(name + ".ln_beta", Tensor({channels})),
      pw1(name + ".pw1", channels * expansion, channels, 1, rng),
      pw2(name + ".pw2", channels, channels * expansion, 1, rng),
      internal_residual(internal_residual_) {}

ad::Var ConvNeXtBlock::forward(const ad::Var& x, bool train) {
  ad::Var y = dw.forward(x, train);
  y = ad::layer_norm_channels(y, pvar(ln_gamma, train), pvar(ln_beta, train));
  y = pw1.forward(y, train);
  y = ad::gelu(y);
  y = pw2.forward(y, train);
  return internal_residual ? ad::add(x, y) : y;
}

void ConvNeXtBlock::collect(std::vector<Param*>& out) {
  dw.collect(out);
  out.push_back(&ln_gamma);
  out.push_back(&ln_beta);
  pw1.collect(out);
  pw2.collect(out);
}

std::int64_t ConvNeXtBlock::param_count() const {
  return dw.param_count() + ln_gamma.value.numel() + ln_beta.value.numel() +
         pw1.param_count() + pw2.param_count();
}

std::int64_t ConvNeXtBlock::macs(std::int64_t h, std::int64_t w) const {
  return dw.macs(h, w) + pw1.macs(h, w) + pw2.macs(h, w);
}

}  // namespace lightbsr
