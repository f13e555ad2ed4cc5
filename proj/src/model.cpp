#include "lightbsr/model.hpp"

#include <stdexcept>

#include "nlohmann/json.hpp"

namespace lightbsr {

void ModelConfig::validate() const {
  if (trunk_width < 4 || trunk_width % 4 != 0)
    throw std::invalid_argument("trunk width must be divisible by 4");
  if (n_groups < 1 || n_blocks_per_group < 1)
    throw std::invalid_argument("need at least one group and block");
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  if (estimator_widths.size() != 6)
    throw std::invalid_argument("estimator needs exactly 6 widths");
  if (estimator_widths.back() % 16 != 0)
    throw std::invalid_argument(
        "last estimator width must be divisible by 16 (pixel-shuffle by 4)");
  if (in_channels < 3) throw std::invalid_argument("in_channels must be >= 3");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["trunk_width"] = trunk_width;
  j["n_groups"] = n_groups;
  j["n_blocks_per_group"] = n_blocks_per_group;
  j["scale"] = scale;
  j["estimator_widths"] = estimator_widths;
  j["in_channels"] = in_channels;
  j["spatial_idr_channels"] = spatial_idr_channels;
  j["channel_idr_dim"] = channel_idr_dim;
  j["convnext_expansion"] = convnext_expansion;
  j["use_spatial_idr"] = use_spatial_idr;
  j["use_channel_idr"] = use_channel_idr;
  j["use_idr_cb"] = use_idr_cb;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.n_groups = j.value("n_groups", c.n_groups);
  c.n_blocks_per_group = j.value("n_blocks_per_group", c.n_blocks_per_group);
  c.scale = j.value("scale", c.scale);
  if (j.contains("estimator_widths"))
    c.estimator_widths = j["estimator_widths"].get<std::vector<int>>();
  c.in_channels = j.value("in_channels", c.in_channels);
  c.spatial_idr_channels = j.value("spatial_idr_channels", c.spatial_idr_channels);
  c.channel_idr_dim = j.value("channel_idr_dim", c.channel_idr_dim);
  c.convnext_expansion = j.value("convnext_expansion", c.convnext_expansion);
  c.use_spatial_idr = j.value("use_spatial_idr", c.use_spatial_idr);
  c.use_channel_idr = j.value("use_channel_idr", c.use_channel_idr);
  c.use_idr_cb = j.value("use_idr_cb", c.use_idr_cb);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

CorrectionBlock::CorrectionBlock(const std::string& name, const ModelConfig& cfg,
                                 InitRng& rng)
    : fc1(name + ".fc1", cfg.channel_idr_dim, cfg.channel_idr_dim, rng),
      fc2(name + ".fc2", cfg.channel_idr_dim, cfg.channel_idr_dim, rng),
      conv1(name + ".conv1", cfg.spatial_idr_channels, cfg.spatial_idr_channels, 3, rng),
      conv2(name + ".conv2", cfg.spatial_idr_channels, cfg.spatial_idr_channels, 3, rng) {}

IDRPair CorrectionBlock::forward(const IDRPair& idr, bool train) {
  IDRPair out;
  out.channel = ad::add(idr.channel, fc2.forward(ad::gelu(fc1.forward(idr.channel, train)), train));
  out.spatial = ad::add(idr.spatial, conv2.forward(ad::gelu(conv1.forward(idr.spatial, train)), train));
  return out;
}

void CorrectionBlock::collect(std::vector<Param*>& out) {
  fc1.collect(out);
  fc2.collect(out);
  conv1.collect(out);
  conv2.collect(out);
}

std::int64_t CorrectionBlock::param_count() const {
  return fc1.param_count() + fc2.param_count() + conv1.param_count() +
         conv2.param_count();
}

std::int64_t CorrectionBlock::macs(std::int64_t h, std::int64_t w) const {
  return fc1.macs() + fc2.macs() + conv1.macs(h, w) + conv2.macs(h, w);
}

// ---------------------------------------------------------------------------

AdaptBlock::AdaptBlock(const std::string& name, const ModelConfig& cfg_, InitRng& rng)
    : cfg(&cfg_),
      sconv1(name + ".sconv1", cfg_.trunk_width / 2,
             cfg_.trunk_width / 4 + cfg_.spatial_idr_channels, 3, rng),
      sconv2(name + ".sconv2", cfg_.trunk_width / 4, cfg_.trunk_width / 2, 3, rng,
             1, 1, /*zero_init=*/true),
      sfuse(name + ".sfuse", cfg_.trunk_width / 4, cfg_.trunk_width / 4, 5, rng),
      cfc1(name + ".cfc1", cfg_.trunk_width / 4,
           cfg_.trunk_width * 3 / 4 + cfg_.channel_idr_dim, rng),
      cfc2(name + ".cfc2", cfg_.trunk_width * 3 / 4, cfg_.trunk_width / 4, rng,
           /*zero_init=*/true),
      fuse(name + ".fuse", cfg_.trunk_width, cfg_.convnext_expansion, rng,
           /*internal_residual=*/false) {}

ad::Var AdaptBlock::forward(const ad::Var& f, const IDRPair& idr, bool train) {
  const int qs = cfg->trunk_width / 4;
  const int c = cfg->trunk_width;
  ad::Var fs = ad::slice_channels(f, 0, qs);
  ad::Var fc = ad::slice_channels(f, qs, c);

  ad::Var fs_out = fs;
  if (cfg->use_spatial_idr) {
    // The spatial IDR comes from a ceil-divided quarter-resolution raw IDR and
    // may overhang the feature plane by up to 3 pixels; crop to match.
    ad::Var rs = ad::crop_hw(idr.spatial, f.value().dim(2), f.value().dim(3));
    ad::Var gate = ad::sigmoid(sconv2.forward(
        sconv1.forward(ad::concat_channels(fs, rs), train), train));
    fs_out = sfuse.forward(ad::mul(fs, gate), train);
  }

  ad::Var fc_out = fc;
  if (cfg->use_channel_idr) {
    ad::Var pooled = ad::global_avg_pool(fc);
    ad::Var gate = ad::sigmoid(cfc2.forward(
        cfc1.forward(ad::concat_cols(pooled, idr.channel), train), train));
    fc_out = ad::scale_channels(fc, gate);
  }

  // The fusion stack's residual carries the block input f, so a zero-weight
  // block is an exact identity.
  ad::Var fused = fuse.forward(ad::concat_channels(fs_out, fc_out), train);
  return ad::add(f, fused);
}

void AdaptBlock::collect(std::vector<Param*>& out) {
  sconv1.collect(out);
  sconv2.collect(out);
  sfuse.collect(out);
  cfc1.collect(out);
  cfc2.collect(out);
  fuse.collect(out);
}

std::int64_t AdaptBlock::param_count() const {
  return sconv1.param_count() + sconv2.param_count() + sfuse.param_count() +
         cfc1.param_count() + cfc2.param_count() + fuse.param_count();
}

std::int64_t AdaptBlock::macs(std::int64_t h, std::int64_t w) const {
  return sconv1.macs(h, w) + sconv2.macs(h, w) + sfuse.macs(h, w) + cfc1.macs() +
         cfc2.macs() + fuse.macs(h, w);
}

// ---------------------------------------------------------------------------

AdaptGroup::AdaptGroup(const std::string& name, const ModelConfig& cfg, InitRng& rng)
    : convnext(name + ".convnext", cfg.trunk_width, cfg.convnext_expansion, rng),
      conv(name + ".conv", cfg.trunk_width, cfg.trunk_width, 3, rng) {
  blocks.reserve(static_cast<std::size_t>(cfg.n_blocks_per_group));
  for (int i = 0; i < cfg.n_blocks_per_group; ++i)
    blocks.emplace_back(name + ".b" + std::to_string(i), cfg, rng);
}

ad::Var AdaptGroup::forward(const ad::Var& f, const IDRPair& idr, bool train) {
  ad::Var y = f;
  for (auto& b : blocks) y = b.forward(y, idr, train);
  y = convnext.forward(y, train);
  y = conv.forward(y, train);
  return ad::add(f, y);
}

void AdaptGroup::collect(std::vector<Param*>& out) {
  for (auto& b : blocks) b.collect(out);
  convnext.collect(out);
  conv.collect(out);
}

std::int64_t AdaptGroup::param_count() const {
  std::int64_t n = convnext.param_count() + conv.param_count();
  for (const auto& b : blocks) n += b.param_count();
  return n;
}

std::int64_t AdaptGroup::macs(std::int64_t h, std::int64_t w) const {
  std::int64_t n = convnext.macs(h, w) + conv.macs(h, w);
  for (const auto& b : blocks) n += b.macs(h, w);
  return n;
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), rng_(init_seed) {
  cfg_.validate();
  const int c = cfg_.trunk_width;
  extractor_ = std::make_unique<Conv2d>("extractor", c, 3, 3, rng_);

  const auto& ew = cfg_.estimator_widths;
  int in_ch = cfg_.in_channels;
  for (int i = 0; i < 6; ++i) {
    const int stride = (i == 1 || i == 3) ? 2 : 1;
    estimator_.emplace_back("estimator.conv" + std::to_string(i), ew[i], in_ch, 3,
                            rng_, stride);
    in_ch = ew[i];
  }
  conv_spatial_ = std::make_unique<Conv2d>(
      "converter.spatial", cfg_.spatial_idr_channels, ew[5] / 16, 3, rng_);
  fc_channel_ =
      std::make_unique<Linear>("converter.channel", cfg_.channel_idr_dim, ew[5], rng_);

  if (cfg_.use_idr_cb)
    for (int g = 0; g < cfg_.n_groups; ++g)
      correction_.emplace_back("cb" + std::to_string(g), cfg_, rng_);
  for (int g = 0; g < cfg_.n_groups; ++g)
    groups_.emplace_back("ag" + std::to_string(g), cfg_, rng_);
  am_conv_ = std::make_unique<Conv2d>("am.conv", c, c, 3, rng_);

  up_conv1_ = std::make_unique<Conv2d>("upscaler.conv1", 3 * cfg_.scale * cfg_.scale,
                                       c, 3, rng_);
  up_conv2_ = std::make_unique<Conv2d>("upscaler.conv2", 3, 3, 3, rng_);
}

ad::Var Model::extract_features(const ad::Var& lr, bool train) {
  return extractor_->forward(lr, train);
}

ad::Var Model::estimate_idr(const ad::Var& x, bool train) {
  if (x.value().dim(1) != cfg_.in_channels)
    throw std::invalid_argument("estimator input channel mismatch");
  if (x.value().dim(2) < 8 || x.value().dim(3) < 8)
    throw std::invalid_argument("estimator input too small (< 8x8)");
  ad::Var y = x;
  for (std::size_t i = 0; i < estimator_.size(); ++i) {
    y = estimator_[i].forward(y, train);
    if (i + 1 < estimator_.size()) y = ad::leaky_relu(y, 0.1);
  }
  return y;
}

IDRPair Model::convert_idr(const ad::Var& raw, bool train) {
  IDRPair out;
  out.spatial = conv_spatial_->forward(ad::pixel_shuffle(raw, 4), train);
  out.channel = fc_channel_->forward(ad::global_avg_pool(raw), train);
  return out;
}

ad::Var Model::adapt_module(const ad::Var& f, const IDRPair& idr, bool train) {
  ad::Var y = f;
  IDRPair cur = idr;
  for (int g = 0; g < cfg_.n_groups; ++g) {
    if (cfg_.use_idr_cb) cur = correction_[static_cast<std::size_t>(g)].forward(cur, train);
    y = groups_[static_cast<std::size_t>(g)].forward(y, cur, train);
  }
  y = am_conv_->forward(y, train);
  return ad::add(f, y);
}

ad::Var Model::upscale(const ad::Var& f, bool train) {
  ad::Var y = up_conv1_->forward(f, train);
  y = ad::pixel_shuffle(y, cfg_.scale);
  return up_conv2_->forward(y, train);
}

ad::Var Model::forward(const ad::Var& lr, const ad::Var& est_input, bool train,
                       const ForwardOptions& opt) {
  IDRPair idr;
  if (opt.external_idr != nullptr) {
    idr.spatial = ad::constant(opt.external_idr->spatial);
    idr.channel = ad::constant(opt.external_idr->channel);
  } else {
    ad::Var raw = estimate_idr(est_input, train);
    if (opt.raw_idr_noise != nullptr)
      raw = ad::add(raw, ad::constant(*opt.raw_idr_noise));
    idr = convert_idr(raw, train);
  }
  ad::Var f = extract_features(lr, train);
  f = adapt_module(f, idr, train);
  return upscale(f, train);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  extractor_->collect(out);
  for (auto& l : estimator_) l.collect(out);
  conv_spatial_->collect(out);
  fc_channel_->collect(out);
  for (auto& cb : correction_) cb.collect(out);
  for (auto& g : groups_) g.collect(out);
  am_conv_->collect(out);
  up_conv1_->collect(out);
  up_conv2_->collect(out);
  return out;
}

std::vector<Param*> Model::estimator_params() {
  std::vector<Param*> out;
  for (auto& l : estimator_) l.collect(out);
  return out;
}

std::vector<Param*> Model::converter_params() {
  std::vector<Param*> out;
  conv_spatial_->collect(out);
  fc_channel_->collect(out);
  return out;
}

Param* Model::find_param(const std::string& name) {
  for (Param* p : params())
    if (p->name == name) return p;
  return nullptr;
}

std::int64_t Model::parameter_count() {
  std::int64_t n = 0;
  for (Param* p : params()) n += p->value.numel();
  return n;
}

std::int64_t Model::flop_count(std::int64_t h, std::int64_t w) const {
  // Multiply-accumulate count of convolutions and FC layers (1 MAC per
  // "FLOP", the convention of the usual SR complexity tables).
  std::int64_t total = 0;
  total += extractor_->macs(h, w);
  std::int64_t eh = h, ew2 = w;
  for (std::size_t i = 0; i < estimator_.size(); ++i) {
    if (estimator_[i].stride == 2) {
      eh = (eh + 2 - 3) / 2 + 1;
      ew2 = (ew2 + 2 - 3) / 2 + 1;
    }
    total += estimator_[i].macs(eh, ew2);
  }
  total += conv_spatial_->macs(h, w);
  total += fc_channel_->macs();
  for (const auto& cb : correction_) total += cb.macs(h, w);
  for (const auto& g : groups_) total += g.macs(h, w);
  total += am_conv_->macs(h, w);
  total += up_conv1_->macs(h, w);
  total += up_conv2_->macs(h * cfg_.scale, w * cfg_.scale);
  return total;
}

StructureReport Model::introspect() const {
  StructureReport r;
  r.estimator_in_channels = cfg_.in_channels;
  r.drp_input = cfg_.in_channels > 3;
  r.spatial_idr_active = cfg_.use_spatial_idr;
  r.channel_idr_active = cfg_.use_channel_idr;
  r.idr_cb_present = cfg_.use_idr_cb && !correction_.empty();
  r.n_groups = cfg_.n_groups;
  r.n_blocks_per_group = cfg_.n_blocks_per_group;
  return r;
}

void Model::zero_all_weights() {
  for (Param* p : params())
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

// ---------------------------------------------------------------------------

Projector::Projector(const std::string& name, int in_dim, int out_dim, InitRng& rng)
    : fc1(name + ".fc1", in_dim, in_dim, rng), fc2(name + ".fc2", out_dim, in_dim, rng) {}

ad::Var Projector::forward(const ad::Var& raw, bool train) {
  ad::Var pooled = ad::global_avg_pool(raw);
  ad::Var y = ad::leaky_relu(fc1.forward(pooled, train), 0.1);
  return fc2.forward(y, train);
}

void Projector::collect(std::vector<Param*>& out) {
  fc1.collect(out);
  fc2.collect(out);
}

}  // namespace lightbsr
