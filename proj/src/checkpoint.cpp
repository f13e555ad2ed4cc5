#include "lightbsr/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace lightbsr {

void CheckpointBundle::put_params(const std::vector<Param*>& params,
                                  const std::string& prefix) {
  for (const Param* p : params) {
    tensors[prefix + p->name] = p->value;
    adam_m[prefix + p->name] = p->adam_m;
    adam_v[prefix + p->name] = p->adam_v;
  }
}

void CheckpointBundle::load_into(const std::vector<Param*>& params,
                                 const std::string& prefix,
                                 bool with_adam_state) const {
  for (Param* p : params) {
    const auto it = tensors.find(prefix + p->name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint missing parameter " + prefix + p->name);
    if (it->second.shape != p->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + p->name);
    p->value = it->second;
    if (with_adam_state) {
      const auto mit = adam_m.find(prefix + p->name);
      const auto vit = adam_v.find(prefix + p->name);
      if (mit != adam_m.end()) p->adam_m = mit->second;
      if (vit != adam_v.end()) p->adam_v = vit->second;
    }
  }
}

bool CheckpointBundle::has_prefix(const std::string& prefix) const {
  for (const auto& [name, _] : tensors)
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

void save_checkpoint(const std::string& path, const CheckpointBundle& ckpt) {
  nlohmann::json header;
  header["magic"] = "LBSRCKPT";
  header["version"] = 1;
  header["stage"] = ckpt.stage;
  header["config"] = ckpt.config_json;
  header["pca_hash"] = ckpt.pca_hash;
  header["optimizer_step"] = ckpt.optimizer_step;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  // Index entries are computed in the same order the blobs are written.
  for (const auto* m : {&ckpt.tensors, &ckpt.adam_m, &ckpt.adam_v}) {
    const char* kind = m == &ckpt.tensors ? "value" : (m == &ckpt.adam_m ? "adam_m" : "adam_v");
    for (const auto& [name, t] : *m) {
      nlohmann::json e;
      e["name"] = name;
      e["kind"] = kind;
      e["shape"] = t.shape;
      e["offset"] = offset;
      index.push_back(e);
      offset += static_cast<std::uint64_t>(t.data.size()) * sizeof(double);
    }
  }
  header["index"] = index;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(hlen));
  for (const auto* m : {&ckpt.tensors, &ckpt.adam_m, &ckpt.adam_v})
    for (const auto& [name, t] : *m)
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("truncated checkpoint header " + path);
  const auto header = nlohmann::json::parse(header_str);
  if (header.value("magic", "") != std::string("LBSRCKPT"))
    throw std::runtime_error("not a checkpoint file: " + path);

  CheckpointBundle ckpt;
  ckpt.stage = header.value("stage", "");
  ckpt.config_json = header.value("config", "");
  ckpt.pca_hash = header.value("pca_hash", std::uint64_t{0});
  ckpt.optimizer_step = header.value("optimizer_step", std::int64_t{0});
  for (const auto& e : header.at("index")) {
    Tensor t(e.at("shape").get<std::vector<std::int64_t>>());
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint data " + path);
    const std::string kind = e.at("kind").get<std::string>();
    const std::string name = e.at("name").get<std::string>();
    if (kind == "value")
      ckpt.tensors[name] = std::move(t);
    else if (kind == "adam_m")
      ckpt.adam_m[name] = std::move(t);
    else
      ckpt.adam_v[name] = std::move(t);
  }
  return ckpt;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace lightbsr
