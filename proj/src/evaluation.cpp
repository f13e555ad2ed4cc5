#include "lightbsr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lightbsr/bicubic.hpp"

namespace lightbsr {

namespace {

// BT.601 full-range luma.
double luma(const Image& img, int y, int x) {
  return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

Image crop_to_multiple(const Image& img, int s) {
  const int h = img.height / s * s;
  const int w = img.width / s * s;
  if (h == img.height && w == img.width) return img;
  return crop(img, 0, 0, h, w);
}

// Runs the estimator + converter on one LR image, optionally adding noise to
// the raw IDR, and finishes the SR forward.
Image sr_forward(Model& model, const Image& lr, const DegradationSpec& spec,
                 const PCABasis* basis, const Tensor* raw_noise) {
  Tensor est_input;
  if (model.config().in_channels > 3) {
    if (basis == nullptr)
      throw std::invalid_argument("model expects a DRP input but no basis was given");
    const DRPTensor drp =
        build_drp(spec.make_kernel(), spec.noise_sigma, *basis, lr.height, lr.width);
    est_input = concat_patch_drp(lr, drp);
  } else {
    est_input = image_to_tensor(lr);
  }
  est_input.shape.insert(est_input.shape.begin(), 1);

  Tensor lr_t = image_to_tensor(lr);
  lr_t.shape.insert(lr_t.shape.begin(), 1);

  ad::Var raw = model.estimate_idr(ad::constant(est_input), false);
  if (raw_noise != nullptr) {
    if (raw_noise->shape != raw.value().shape)
      throw std::invalid_argument("raw IDR noise shape mismatch");
    raw = ad::add(raw, ad::constant(*raw_noise));
  }
  IDRPair idr = model.convert_idr(raw, false);
  ad::Var f = model.extract_features(ad::constant(lr_t), false);
  f = model.adapt_module(f, idr, false);
  ad::Var sr = model.upscale(f, false);

  Tensor out = sr.value();
  out.shape.erase(out.shape.begin());
  return tensor_to_image(out);
}

Tensor raw_idr_shape_noise(Model& model, const Image& lr, const DegradationSpec& spec,
                           const PCABasis* basis, double amplitude,
                           std::uint64_t seed) {
  // Two stride-2 estimator convs: each halves the plane via ceil(n/2).
  const auto half2 = [](int n) { return (n + 1) / 2; };
  const std::int64_t h = half2(half2(lr.height));
  const std::int64_t w = half2(half2(lr.width));
  (void)spec;
  (void)basis;
  Tensor noise({1, model.config().estimator_widths.back(), h, w});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : noise.data) v = amplitude * u(rng);
  return noise;
}

}  // namespace

double psnr(const Image& a, const Image& b, PsnrMode mode, int shave) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("psnr: image dimensions differ");
  const int y0 = shave, x0 = shave;
  const int y1 = a.height - shave, x1 = a.width - shave;
  if (y1 <= y0 || x1 <= x0) throw std::invalid_argument("psnr: shave leaves no pixels");

  double mse = 0.0;
  std::int64_t n = 0;
  if (mode == PsnrMode::y_channel) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const double d = luma(a, y, x) - luma(b, y, x);
        mse += d * d;
        ++n;
      }
  } else {
    for (int c = 0; c < 3; ++c)
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const double d = a.at(c, y, x) - b.at(c, y, x);
          mse += d * d;
          ++n;
        }
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::string spec_label(const DegradationSpec& spec) {
  std::ostringstream ss;
  ss.precision(3);
  if (spec.kind == KernelKind::isotropic)
    ss << "iso_w" << spec.width;
  else
    ss << "aniso_l" << spec.eig1 << "_" << spec.eig2 << "_a" << spec.angle;
  if (spec.noise_sigma > 0.0) ss << "_n" << spec.noise_sigma;
  return ss.str();
}

EmbeddingDump export_embeddings(Model& model, const DatasetManifest& manifest,
                                const Corpus& corpus,
                                const std::vector<DegradationSpec>& specs,
                                const PCABasis* basis, std::uint64_t seed) {
  if (specs.size() < 2)
    throw std::invalid_argument("export_embeddings needs at least 2 specs");
  if (manifest.entries.size() != corpus.images.size())
    throw std::invalid_argument("manifest / corpus size mismatch");

  EmbeddingDump dump;
  std::uint64_t stream = 0;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const DegradationSpec& spec = specs[si];
    for (std::size_t ii = 0; ii < corpus.images.size(); ++ii) {
      const Image lr = degrade(corpus.images[ii], spec, derive_seed(seed, stream++));
      Tensor est_input;
      if (model.config().in_channels > 3) {
        if (basis == nullptr)
          throw std::invalid_argument("model expects a DRP input but no basis was given");
        const DRPTensor drp = build_drp(spec.make_kernel(), spec.noise_sigma, *basis,
                                        lr.height, lr.width);
        est_input = concat_patch_drp(lr, drp);
      } else {
        est_input = image_to_tensor(lr);
      }
      est_input.shape.insert(est_input.shape.begin(), 1);
      ad::Var raw = model.estimate_idr(ad::constant(est_input), false);
      IDRPair idr = model.convert_idr(raw, false);
      const Tensor& ch = idr.channel.value();

      EmbeddingRow row;
      row.id = manifest.entries[ii].id;
      row.label = spec_label(spec);
      row.v.assign(ch.data.begin(), ch.data.end());
      dump.rows.push_back(std::move(row));
    }
  }
  return dump;
}

void save_embedding_csv(const std::string& path, const EmbeddingDump& dump) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t dim = dump.rows.empty() ? 0 : dump.rows[0].v.size();
  out << "id,label";
  for (std::size_t k = 0; k < dim; ++k) out << ",v" << k;
  out << '\n';
  out.precision(17);
  for (const auto& r : dump.rows) {
    out << r.id << ',' << r.label;
    for (double v : r.v) out << ',' << v;
    out << '\n';
  }
}

EmbeddingDump load_embedding_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty embedding csv");
  EmbeddingDump dump;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EmbeddingRow r;
    std::string field;
    if (!std::getline(ss, r.id, ',') || !std::getline(ss, r.label, ','))
      throw std::runtime_error("malformed embedding row: " + line);
    while (std::getline(ss, field, ',')) r.v.push_back(std::stod(field));
    dump.rows.push_back(std::move(r));
  }
  return dump;
}

void save_embedding_2d_csv(const std::string& path, const EmbeddingDump& dump) {
  if (dump.rows.empty()) throw std::invalid_argument("empty embedding dump");
  const std::size_t n = dump.rows.size();
  const std::size_t dim = dump.rows[0].v.size();

  std::vector<double> mean(dim, 0.0);
  for (const auto& r : dump.rows)
    for (std::size_t k = 0; k < dim; ++k) mean[k] += r.v[k];
  for (double& m : mean) m /= static_cast<double>(n);

  // Two leading PCA directions via power iteration with deflation; quick-look
  // precision is all that is needed here.
  std::vector<std::vector<double>> centered(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) centered[i][k] = dump.rows[i].v[k] - mean[k];

  auto cov_mul = [&](const std::vector<double>& v, const std::vector<double>* deflate) {
    std::vector<double> out(dim, 0.0);
    for (const auto& row : centered) {
      std::vector<double> r = row;
      if (deflate) {
        double proj = 0.0;
        for (std::size_t k = 0; k < dim; ++k) proj += row[k] * (*deflate)[k];
        for (std::size_t k = 0; k < dim; ++k) r[k] -= proj * (*deflate)[k];
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += r[k] * v[k];
      for (std::size_t k = 0; k < dim; ++k) out[k] += dot * r[k];
    }
    return out;
  };
  auto top_dir = [&](const std::vector<double>* deflate) {
    std::vector<double> v(dim, 0.0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (double& x : v) x = g(rng);
    for (int it = 0; it < 100; ++it) {
      v = cov_mul(v, deflate);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      for (double& x : v) x /= norm;
    }
    return v;
  };
  const std::vector<double> d1 = top_dir(nullptr);
  const std::vector<double> d2 = top_dir(&d1);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "id,label,x,y\n";
  out.precision(17);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      x += centered[i][k] * d1[k];
      y += centered[i][k] * d2[k];
    }
    out << dump.rows[i].id << ',' << dump.rows[i].label << ',' << x << ',' << y << '\n';
  }
}

Separability separability_score(const EmbeddingDump& dump) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < dump.rows.size(); ++i)
    by_label[dump.rows[i].label].push_back(i);
  if (by_label.size() < 2)
    throw std::invalid_argument("separability needs at least 2 labels");
  for (const auto& [label, idxs] : by_label)
    if (idxs.size() < 2)
      throw std::invalid_argument("singleton class in embedding dump: " + label);

  const auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < dump.rows[i].v.size(); ++k) {
      const double d = dump.rows[i].v[k] - dump.rows[j].v[k];
      s += d * d;
    }
    return std::sqrt(s);
  };

  // Silhouette.
  double sil_sum = 0.0;
  for (std::size_t i = 0; i < dump.rows.size(); ++i) {
    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, idxs] : by_label) {
      double mean = 0.0;
      int cnt = 0;
      for (std::size_t j : idxs) {
        if (j == i) continue;
        mean += dist(i, j);
        ++cnt;
      }
      if (label == dump.rows[i].label) {
        a = mean / cnt;
      } else {
        mean /= idxs.size();
        b = std::min(b, mean);
      }
    }
    const double denom = std::max(a, b);
    sil_sum += denom > 0.0 ? (b - a) / denom : 0.0;
  }

  // Leave-one-out nearest-centroid probe.
  const std::size_t dim = dump.rows[0].v.size();
  std::map<std::string, std::vector<double>> sums;
  for (const auto& [label, idxs] : by_label) {
    std::vector<double> s(dim, 0.0);
    for (std::size_t j : idxs)
      for (std::size_t k = 0; k < dim; ++k) s[k] += dump.rows[j].v[k];
    sums[label] = std::move(s);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dump.rows.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::string best_label;
    for (const auto& [label, s] : sums) {
      const std::size_t cnt = by_label[label].size();
      const bool own = label == dump.rows[i].label;
      const double denom = static_cast<double>(own ? cnt - 1 : cnt);
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double centroid = (s[k] - (own ? dump.rows[i].v[k] : 0.0)) / denom;
        const double d = dump.rows[i].v[k] - centroid;
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        best_label = label;
      }
    }
    if (best_label == dump.rows[i].label) ++correct;
  }

  Separability out;
  out.silhouette = sil_sum / static_cast<double>(dump.rows.size());
  out.probe_accuracy = static_cast<double>(correct) / static_cast<double>(dump.rows.size());
  return out;
}

PerturbResult perturb_idr_eval(Model& model, const Corpus& corpus,
                               const DegradationSpec& spec, double amplitude,
                               const PCABasis* basis, std::uint64_t seed) {
  if (corpus.images.empty()) throw std::invalid_argument("empty corpus");
  PerturbResult res;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const Image hr = crop_to_multiple(corpus.images[i], spec.scale);
    const Image lr = degrade(hr, spec, derive_seed(seed, 2 * i));
    const Image clean = sr_forward(model, lr, spec, basis, nullptr);
    const Tensor noise =
        raw_idr_shape_noise(model, lr, spec, basis, amplitude, derive_seed(seed, 2 * i + 1));
    const Image pert = sr_forward(model, lr, spec, basis, &noise);
    res.clean_psnr += psnr(hr, clean, PsnrMode::y_channel, spec.scale);
    res.perturbed_psnr += psnr(hr, pert, PsnrMode::y_channel, spec.scale);
  }
  res.clean_psnr /= static_cast<double>(corpus.images.size());
  res.perturbed_psnr /= static_cast<double>(corpus.images.size());
  return res;
}

BenchReport run_benchmark(Model& model, const DatasetManifest& manifest,
                          const Corpus& corpus,
                          const std::vector<DegradationSpec>& grid,
                          const PCABasis* basis, std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("empty benchmark grid");
  if (manifest.entries.size() != corpus.images.size())
    throw std::invalid_argument("manifest / corpus size mismatch");

  BenchReport report;
  std::uint64_t stream = 0;
  for (const DegradationSpec& spec : grid) {
    BenchCell cell_model{"model", spec_label(spec), {}, 0.0};
    BenchCell cell_bicubic{"bicubic", spec_label(spec), {}, 0.0};
    for (const Image& full_hr : corpus.images) {
      const Image hr = crop_to_multiple(full_hr, spec.scale);
      const Image lr = degrade(hr, spec, derive_seed(seed, stream++));
      const Image sr = sr_forward(model, lr, spec, basis, nullptr);
      const Image bi = bicubic_upsample(lr, spec.scale);
      cell_model.per_image_psnr.push_back(psnr(hr, sr, PsnrMode::y_channel, spec.scale));
      cell_bicubic.per_image_psnr.push_back(psnr(hr, bi, PsnrMode::y_channel, spec.scale));
    }
    for (BenchCell* c : {&cell_model, &cell_bicubic}) {
      double sum = 0.0;
      for (double v : c->per_image_psnr) sum += v;
      c->mean_psnr = sum / static_cast<double>(c->per_image_psnr.size());
      report.cells.push_back(std::move(*c));
    }
  }
  return report;
}

void save_bench_csv(const std::string& path, const BenchReport& report,
                    const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "model,label,image_id,psnr\n";
  out.precision(12);
  for (const auto& c : report.cells) {
    for (std::size_t i = 0; i < c.per_image_psnr.size(); ++i)
      out << c.model_id << ',' << c.label << ',' << manifest.entries[i].id << ','
          << c.per_image_psnr[i] << '\n';
    out << c.model_id << ',' << c.label << ",mean," << c.mean_psnr << '\n';
  }
}

void print_bench_summary(const BenchReport& report) {
  std::cout << "model      label                     mean PSNR (dB)\n";
  for (const auto& c : report.cells) {
    std::cout.width(10);
    std::cout << std::left << c.model_id << ' ';
    std::cout.width(25);
    std::cout << std::left << c.label << ' ';
    std::cout.precision(4);
    std::cout << std::fixed << c.mean_psnr << '\n';
    std::cout.unsetf(std::ios::fixed);
  }
}

}  // namespace lightbsr
