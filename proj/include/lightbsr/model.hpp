#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lightbsr/layers.hpp"
#include "lightbsr/tensor.hpp"

namespace lightbsr {

struct ModelConfig {
  int trunk_width = 64;  // C; divisible by 4 (the 1:3 split)
  int n_groups = 8;
  int n_blocks_per_group = 8;
  int scale = 4;
  std::vector<int> estimator_widths = {32, 64, 64, 64, 64, 128};
  int in_channels = 3;  // 3 for the student, t+6 for the teacher
  int spatial_idr_channels = 8;
  int channel_idr_dim = 48;
  int convnext_expansion = 2;
  bool use_spatial_idr = true;
  bool use_channel_idr = true;
  bool use_idr_cb = true;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Spatial IDR [N, 8, H, W] and channel IDR [N, 48] travelling together.
struct IDRPair {
  ad::Var spatial;
  ad::Var channel;
};

struct IDRPairTensors {
  Tensor spatial;
  Tensor channel;
};

// Which inputs / branches a configuration activates; used by ablation tests.
struct StructureReport {
  int estimator_in_channels = 0;
  bool drp_input = false;  // estimator consumes (t+6)-channel input
  bool spatial_idr_active = false;
  bool channel_idr_active = false;
  bool idr_cb_present = false;
  int n_groups = 0;
  int n_blocks_per_group = 0;
};

class Model;

// Optional additive noise on the raw IDR (robustness harness) or an
// externally supplied IDR pair (bypasses the estimator).
struct ForwardOptions {
  const Tensor* raw_idr_noise = nullptr;
  const IDRPairTensors* external_idr = nullptr;
};

// IDR correction: residual two-layer refinements on both IDR forms.
struct CorrectionBlock {
  Linear fc1, fc2;
  Conv2d conv1, conv2;

  CorrectionBlock(const std::string& name, const ModelConfig& cfg, InitRng& rng);
  IDRPair forward(const IDRPair& idr, bool train);
  void collect(std::vector<Param*>& out);
  std::int64_t param_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
};

// Basic adaptation unit: 1:3 channel split, spatial + channel modulation,
// fusion through a ConvNeXt stack whose residual carries the block input.
struct AdaptBlock {
  const ModelConfig* cfg;
  Conv2d sconv1, sconv2, sfuse;
  Linear cfc1, cfc2;
  ConvNeXtBlock fuse;

  AdaptBlock(const std::string& name, const ModelConfig& cfg_, InitRng& rng);
  ad::Var forward(const ad::Var& f, const IDRPair& idr, bool train);
  void collect(std::vector<Param*>& out);
  std::int64_t param_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
};

struct AdaptGroup {
  std::vector<AdaptBlock> blocks;
  ConvNeXtBlock convnext;
  Conv2d conv;

  AdaptGroup(const std::string& name, const ModelConfig& cfg, InitRng& rng);
  ad::Var forward(const ad::Var& f, const IDRPair& idr, bool train);
  void collect(std::vector<Param*>& out);
  std::int64_t param_count() const;
  std::int64_t macs(std::int64_t h, std::int64_t w) const;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // ---- forward pieces (spec operations) ----
  ad::Var extract_features(const ad::Var& lr, bool train);
  // six-layer conv stack; raw IDR at H/4 x W/4. Input must be >= 8x8.
  ad::Var estimate_idr(const ad::Var& x, bool train);
  IDRPair convert_idr(const ad::Var& raw, bool train);
  ad::Var upscale(const ad::Var& f, bool train);
  // full correction + adaptation chain
  ad::Var adapt_module(const ad::Var& f, const IDRPair& idr, bool train);

  // Full SR forward. `est_input` is what the estimator sees (3-channel LR for
  // the student, (t+6)-channel concat for the teacher).
  ad::Var forward(const ad::Var& lr, const ad::Var& est_input, bool train,
                  const ForwardOptions& opt = ForwardOptions{});

  // ---- bookkeeping ----
  std::vector<Param*> params();
  std::vector<Param*> estimator_params();
  std::vector<Param*> converter_params();
  Param* find_param(const std::string& name);

  std::int64_t parameter_count();
  // Analytic multiply-accumulate count of one forward at an h x w LR input.
  std::int64_t flop_count(std::int64_t h, std::int64_t w) const;

  StructureReport introspect() const;

  void zero_all_weights();

 private:
  ModelConfig cfg_;
  InitRng rng_;
  std::unique_ptr<Conv2d> extractor_;
  std::vector<Conv2d> estimator_;
  std::unique_ptr<Conv2d> conv_spatial_;  // after pixel shuffle
  std::unique_ptr<Linear> fc_channel_;
  std::vector<CorrectionBlock> correction_;
  std::vector<AdaptGroup> groups_;
  std::unique_ptr<Conv2d> am_conv_;
  std::unique_ptr<Conv2d> up_conv1_;
  std::unique_ptr<Conv2d> up_conv2_;
};

// Two-layer FC projection head used by the contrastive branches.
struct Projector {
  Linear fc1, fc2;
  Projector(const std::string& name, int in_dim, int out_dim, InitRng& rng);
  // raw IDR [N, C, h, w] -> L2-normalized [N, out_dim]
  ad::Var forward(const ad::Var& raw, bool train);
  void collect(std::vector<Param*>& out);
};

}  // namespace lightbsr
