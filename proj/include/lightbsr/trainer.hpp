#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lightbsr/checkpoint.hpp"
#include "lightbsr/data.hpp"
#include "lightbsr/losses.hpp"
#include "lightbsr/model.hpp"
#include "lightbsr/pca.hpp"

namespace lightbsr {

struct TrainConfig {
  int b = 64;              // images per batch
  int d = 4;               // positive patches per image (>= 2)
  double tau = 0.07;       // InfoNCE temperature
  double alpha = 0.999;    // momentum coefficient
  double beta = 0.1;       // channel-IDR L1 balance in the distillation loss
  int queue_capacity = 8192;
  double lr_stage1 = 2e-4;
  int epochs_stage1 = 100;
  double lr_stage2_start = 2e-4;
  double lr_stage2_end = 1e-6;
  int epochs_stage2 = 600;
  int patch = 64;          // LR patch side
  int projection_dim = 128;
  DegradationSetting setting = DegradationSetting::setting1;
  std::uint64_t seed = 0;
  int steps_per_epoch = 0;     // 0 -> ceil(#images / b)
  int checkpoint_every = 0;    // epochs between periodic checkpoints; 0 = final only

  // Ablation toggles. use_drp controls the teacher's estimator input;
  // use_cl drops the contrastive term from teacher stage 2. The remaining
  // structural toggles live in ModelConfig.
  bool use_drp = true;
  bool use_cl = true;
  bool momentum_in_stage2 = true;  // keep updating M and the queue in stage 2

  double ldl_weight = 1.0;     // weight of L_DL in student stage 2
  bool resample_each_step = true;  // false: reuse the step-0 batch (overfit runs)
  bool augment_data = true;        // dihedral augmentation of HR images
  // Non-empty: isotropic widths are drawn from this pool instead of the
  // setting's continuous range (desk-scale discriminability runs).
  std::vector<double> width_pool;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochMetrics {
  int epoch = 0;
  double l_cl = 0.0;
  double l_sr = 0.0;
  double l2 = 0.0;
  double lkl = 0.0;
  double l1 = 0.0;
  double l_dl = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

// Append-only metrics log; the header is written when the file is created.
void append_metrics_csv(const std::string& path, const EpochMetrics& m);

struct TrainResult {
  CheckpointBundle checkpoint;
  std::vector<EpochMetrics> history;
};

// Teacher estimator input channel count implied by the config (t+6 with the
// degradation prior attached, plain 3 without).
int teacher_in_channels(const TrainConfig& cfg, int t);

// In-memory corpus: decoded HR images in manifest order.
struct Corpus {
  std::vector<Image> images;
  std::uint64_t manifest_hash = 0;

  static Corpus load(const DatasetManifest& manifest);
};

// Stage drivers. Each writes <stage>.ckpt and <stage>_metrics.csv under
// out_dir (skipped when out_dir is empty) and returns the final checkpoint
// plus per-epoch metrics.
TrainResult train_teacher_stage1(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const std::string& out_dir);
TrainResult train_teacher_stage2(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& stage1,
                                 const std::string& out_dir);
TrainResult train_student_stage1(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& teacher,
                                 const std::string& out_dir);
TrainResult train_student_stage2(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& teacher,
                                 const CheckpointBundle& stage1,
                                 const std::string& out_dir);

// Rebuilds a model from a checkpoint (config echo + "model/" tensors).
std::unique_ptr<Model> model_from_checkpoint(const CheckpointBundle& ckpt,
                                             std::uint64_t init_seed = 1);

}  // namespace lightbsr
