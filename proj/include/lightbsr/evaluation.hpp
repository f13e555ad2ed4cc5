#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lightbsr/data.hpp"
#include "lightbsr/degrade.hpp"
#include "lightbsr/image.hpp"
#include "lightbsr/model.hpp"
#include "lightbsr/pca.hpp"
#include "lightbsr/trainer.hpp"

namespace lightbsr {

enum class PsnrMode { y_channel, rgb };

// 10*log10(1/MSE) on [0,1] pixels after shaving `shave` border pixels.
// Identical images return +infinity.
double psnr(const Image& a, const Image& b, PsnrMode mode = PsnrMode::y_channel,
            int shave = 0);

struct EmbeddingRow {
  std::string id;
  std::string label;
  std::vector<double> v;
};

struct EmbeddingDump {
  std::vector<EmbeddingRow> rows;
};

// Short human-readable tag for grouping embeddings by degradation.
std::string spec_label(const DegradationSpec& spec);

// Channel IDR per (image, spec). The model's estimator consumes the
// DRP-augmented input when its config says so (basis required then).
EmbeddingDump export_embeddings(Model& model, const DatasetManifest& manifest,
                                const Corpus& corpus,
                                const std::vector<DegradationSpec>& specs,
                                const PCABasis* basis, std::uint64_t seed);

void save_embedding_csv(const std::string& path, const EmbeddingDump& dump);
EmbeddingDump load_embedding_csv(const std::string& path);

// 2-D PCA quick-look projection of the dump, written as id,label,x,y.
void save_embedding_2d_csv(const std::string& path, const EmbeddingDump& dump);

struct Separability {
  double silhouette = 0.0;      // Euclidean silhouette over labels, in [-1, 1]
  double probe_accuracy = 0.0;  // leave-one-out nearest-centroid accuracy
};

Separability separability_score(const EmbeddingDump& dump);

struct PerturbResult {
  double clean_psnr = 0.0;
  double perturbed_psnr = 0.0;
};

// Forward each image twice: once normally, once with amplitude-scaled
// uniform[0,1] noise added to the raw IDR before the converter.
PerturbResult perturb_idr_eval(Model& model, const Corpus& corpus,
                               const DegradationSpec& spec, double amplitude,
                               const PCABasis* basis, std::uint64_t seed);

struct BenchCell {
  std::string model_id;  // "model" or "bicubic"
  std::string label;
  std::vector<double> per_image_psnr;
  double mean_psnr = 0.0;
};

struct BenchReport {
  std::vector<BenchCell> cells;
  std::uint64_t config_hash = 0;
};

// Full PSNR grid over degradation specs, with a bicubic-upsample baseline row
// per spec. PSNR uses the Y channel with shave = scale.
BenchReport run_benchmark(Model& model, const DatasetManifest& manifest,
                          const Corpus& corpus,
                          const std::vector<DegradationSpec>& grid,
                          const PCABasis* basis, std::uint64_t seed);

void save_bench_csv(const std::string& path, const BenchReport& report,
                    const DatasetManifest& manifest);
void print_bench_summary(const BenchReport& report);

}  // namespace lightbsr
