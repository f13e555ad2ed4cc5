#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lightbsr/autodiff.hpp"
#include "lightbsr/tensor.hpp"

namespace lightbsr {

// Versioned container for parameters, Adam state, a training-stage marker and
// the provenance needed to resume or evaluate a run.
struct CheckpointBundle {
  std::string stage;        // e.g. "teacher_stage1"
  std::string config_json;  // resolved run config echo
  std::uint64_t pca_hash = 0;
  std::int64_t optimizer_step = 0;
  std::map<std::string, Tensor> tensors;       // parameter values by name
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;

  void put_params(const std::vector<Param*>& params, const std::string& prefix = "");
  // Loads matching names into params; throws on missing name or shape mismatch.
  void load_into(const std::vector<Param*>& params, const std::string& prefix = "",
                 bool with_adam_state = true) const;
  bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const std::string& path, const CheckpointBundle& ckpt);
CheckpointBundle load_checkpoint(const std::string& path);

// FNV-1a over a file's bytes; used for determinism checks and provenance.
std::uint64_t hash_file(const std::string& path);

}  // namespace lightbsr
