#include "lightbsr/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace lightbsr {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* ptr, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(ptr);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t DatasetManifest::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& e : entries) {
    h = fnv1a(h, e.id.data(), e.id.size());
    h = fnv1a(h, e.path.data(), e.path.size());
    h = fnv1a(h, &e.height, sizeof(e.height));
    h = fnv1a(h, &e.width, sizeof(e.width));
  }
  return h;
}

DatasetManifest scan_dataset(const std::string& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("dataset root is not a directory: " + root);
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png") continue;
    rels.push_back(fs::relative(entry.path(), root).generic_string());
  }
  std::sort(rels.begin(), rels.end());

  DatasetManifest m;
  m.root = root;
  for (const auto& rel : rels) {
    int h = 0, w = 0;
    if (!read_png_dims((fs::path(root) / rel).string(), &h, &w)) {
      std::cerr << "warning: skipping unreadable image " << rel << "\n";
      continue;
    }
    ManifestEntry e;
    e.path = rel;
    e.id = fs::path(rel).stem().string();
    e.height = h;
    e.width = w;
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  for (const auto& e : m.entries)
    out << e.id << '\t' << e.path << '\t' << e.height << '\t' << e.width << '\n';
}

DatasetManifest load_manifest(const std::string& path, const std::string& root) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path);
  DatasetManifest m;
  m.root = root;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(std::getline(ss, e.id, '\t') && std::getline(ss, e.path, '\t') &&
          ss >> e.height >> e.width))
      throw std::runtime_error("malformed manifest line: " + line);
    m.entries.push_back(std::move(e));
  }
  return m;
}

Image augment(const Image& hr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, 7);
  return dihedral_transform(hr, dist(rng));
}

TrainSample make_train_sample(const Image& hr, const DegradationSpec& spec,
                              const PCABasis& basis, int patch, int d,
                              std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("need at least one positive patch");
  const Image lr = degrade(hr, spec, derive_seed(seed, 0));
  if (lr.height < patch || lr.width < patch)
    throw std::runtime_error("LR image smaller than the requested patch size");

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_int_distribution<int> dy(0, lr.height - patch);
  std::uniform_int_distribution<int> dx(0, lr.width - patch);

  TrainSample s;
  s.spec = spec;
  for (int i = 0; i < d; ++i) {
    const int y0 = dy(rng);
    const int x0 = dx(rng);
    s.lr_patches.push_back(crop(lr, y0, x0, patch, patch));
    if (i == 0)
      s.hr_patch = crop(hr, y0 * spec.scale, x0 * spec.scale,
                        patch * spec.scale, patch * spec.scale);
  }
  s.drp = build_drp(spec.make_kernel(), spec.noise_sigma, basis, patch, patch);
  return s;
}

Tensor stack_lr_patches(const Batch& batch) {
  const int b = batch.b(), d = batch.d();
  if (b == 0 || d == 0) throw std::invalid_argument("empty batch");
  const int h = batch.samples[0].lr_patches[0].height;
  const int w = batch.samples[0].lr_patches[0].width;
  Tensor out({static_cast<std::int64_t>(b) * d, 3, h, w});
  double* dst = out.data.data();
  for (const auto& s : batch.samples)
    for (const auto& p : s.lr_patches) {
      if (p.height != h || p.width != w)
        throw std::invalid_argument("ragged batch");
      std::copy(p.pixels.begin(), p.pixels.end(), dst);
      dst += p.pixels.size();
    }
  return out;
}

Tensor stack_teacher_inputs(const Batch& batch) {
  const int b = batch.b(), d = batch.d();
  if (b == 0 || d == 0) throw std::invalid_argument("empty batch");
  const int h = batch.samples[0].lr_patches[0].height;
  const int w = batch.samples[0].lr_patches[0].width;
  const int c = 3 + batch.samples[0].drp.t + 3;
  Tensor out({static_cast<std::int64_t>(b) * d, c, h, w});
  double* dst = out.data.data();
  for (const auto& s : batch.samples)
    for (const auto& p : s.lr_patches) {
      const Tensor one = concat_patch_drp(p, s.drp);
      std::copy(one.data.begin(), one.data.end(), dst);
      dst += one.data.size();
    }
  return out;
}

Tensor stack_hr_targets(const Batch& batch) {
  const int b = batch.b();
  if (b == 0) throw std::invalid_argument("empty batch");
  const int h = batch.samples[0].hr_patch.height;
  const int w = batch.samples[0].hr_patch.width;
  Tensor out({b, 3, h, w});
  double* dst = out.data.data();
  for (const auto& s : batch.samples) {
    std::copy(s.hr_patch.pixels.begin(), s.hr_patch.pixels.end(), dst);
    dst += s.hr_patch.pixels.size();
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x7f4a7c15ull));
}

}  // namespace lightbsr
