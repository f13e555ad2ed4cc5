#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lightbsr/degrade.hpp"
#include "lightbsr/drp.hpp"
#include "lightbsr/image.hpp"
#include "lightbsr/pca.hpp"

namespace lightbsr {

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to root
  int height = 0;
  int width = 0;
};

struct DatasetManifest {
  std::string root;
  std::string split = "train";
  std::vector<ManifestEntry> entries;

  std::uint64_t hash() const;
};

// Scans a directory for PNG images in lexicographic order. Non-image or
// unreadable files are skipped with a warning on stderr.
DatasetManifest scan_dataset(const std::string& root);

// Line-delimited persistence: id <TAB> path <TAB> h <TAB> w.
void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path, const std::string& root);

// One of the 8 dihedral transforms, chosen by a seeded draw.
Image augment(const Image& hr, std::uint64_t seed);

// Positive-sample set: D crops of one degraded LR image plus the HR window
// aligned to the first crop, and the shared DRP.
struct TrainSample {
  Image hr_patch;                // 3 x (s*patch) x (s*patch)
  std::vector<Image> lr_patches; // D of 3 x patch x patch
  DegradationSpec spec;
  DRPTensor drp;
};

TrainSample make_train_sample(const Image& hr, const DegradationSpec& spec,
                              const PCABasis& basis, int patch, int d,
                              std::uint64_t seed);

struct Batch {
  std::vector<TrainSample> samples;
  int b() const { return static_cast<int>(samples.size()); }
  int d() const { return samples.empty() ? 0 : static_cast<int>(samples[0].lr_patches.size()); }
};

// Stacked views used by the trainer: LR patches as [B*D, 3, H, W] and
// teacher inputs as [B*D, t+6, H, W].
Tensor stack_lr_patches(const Batch& batch);
Tensor stack_teacher_inputs(const Batch& batch);
Tensor stack_hr_targets(const Batch& batch);

// Mixes a stream id into a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lightbsr
