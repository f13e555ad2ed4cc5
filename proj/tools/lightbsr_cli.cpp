// lightbsr: blind super-resolution training and evaluation toolbox.
//
// Subcommands: degrade, fit-pca, train, eval. Runs are driven by a JSON
// config file (see --config) with CLI flags taking precedence. Exit codes:
// 0 success, 1 usage error, 2 validation error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "lightbsr/checkpoint.hpp"
#include "lightbsr/data.hpp"
#include "lightbsr/degrade.hpp"
#include "lightbsr/evaluation.hpp"
#include "lightbsr/pca.hpp"
#include "lightbsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace lightbsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key))
      throw std::invalid_argument("unknown config key '" + key + "' in " + where);
}

DegradationSetting parse_setting(const std::string& s) {
  if (s == "setting1") return DegradationSetting::setting1;
  if (s == "setting2") return DegradationSetting::setting2;
  throw std::invalid_argument("unknown setting: " + s + " (use setting1|setting2)");
}

// Resolved run configuration: file values overridden by flags.
struct RunConfig {
  std::string setting = "setting1";
  std::string dataset_root;
  std::string output_dir = ".";
  std::string basis_path;
  std::string teacher_ckpt;
  std::string stage1_ckpt;
  std::uint64_t seed = 0;
  TrainConfig train;
  ModelConfig model;

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    nlohmann::json j;
    in >> j;
    reject_unknown_keys(j,
                        {"setting", "dataset_root", "output_dir", "basis", "teacher_ckpt",
                         "stage1_ckpt", "seed", "train", "model"},
                        "top level");
    RunConfig c;
    c.setting = j.value("setting", c.setting);
    parse_setting(c.setting);
    c.dataset_root = j.value("dataset_root", c.dataset_root);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.basis_path = j.value("basis", c.basis_path);
    c.teacher_ckpt = j.value("teacher_ckpt", c.teacher_ckpt);
    c.stage1_ckpt = j.value("stage1_ckpt", c.stage1_ckpt);
    c.seed = j.value("seed", c.seed);
    if (j.contains("train")) {
      reject_unknown_keys(
          j["train"],
          {"b", "d", "tau", "alpha", "beta", "queue_capacity", "lr_stage1",
           "epochs_stage1", "lr_stage2_start", "lr_stage2_end", "epochs_stage2", "patch",
           "projection_dim", "setting", "seed", "steps_per_epoch", "checkpoint_every",
           "use_drp", "use_cl", "momentum_in_stage2", "ldl_weight", "resample_each_step",
           "augment_data", "width_pool"},
          "train");
      c.train = TrainConfig::from_json(j["train"].dump());
    }
    if (j.contains("model")) {
      reject_unknown_keys(j["model"],
                          {"trunk_width", "n_groups", "n_blocks_per_group", "scale",
                           "estimator_widths", "in_channels", "spatial_idr_channels",
                           "channel_idr_dim", "convnext_expansion", "use_spatial_idr",
                           "use_channel_idr", "use_idr_cb"},
                          "model");
      c.model = ModelConfig::from_json(j["model"].dump());
    }
    return c;
  }

  std::string echo_json() const {
    nlohmann::json j;
    j["setting"] = setting;
    j["dataset_root"] = dataset_root;
    j["output_dir"] = output_dir;
    j["basis"] = basis_path;
    j["teacher_ckpt"] = teacher_ckpt;
    j["stage1_ckpt"] = stage1_ckpt;
    j["seed"] = seed;
    j["train"] = nlohmann::json::parse(train.to_json());
    j["model"] = nlohmann::json::parse(model.to_json());
    return j.dump(2);
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text << '\n';
}

std::vector<double> parse_width_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(std::stod(field));
  return out;
}

// ---- degrade ----------------------------------------------------------

int cmd_degrade(const std::string& input, const std::string& out_dir,
                const DegradationSpec& spec, const std::string& setting_name,
                std::uint64_t seed) {
  if (!setting_name.empty()) {
    const auto err = validate_spec(spec, parse_setting(setting_name));
    if (err) throw std::invalid_argument("spec rejected for " + setting_name + ": " + *err);
  } else {
    spec.make_kernel();  // basic shape validation
  }
  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".png")
        inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.push_back(input);
  }
  if (inputs.empty()) throw std::invalid_argument("no input PNGs found in " + input);

  fs::create_directories(out_dir);
  std::uint64_t stream = 0;
  for (const auto& p : inputs) {
    const Image hr = read_png(p.string());
    const Image lr = degrade(hr, spec, derive_seed(seed, stream++));
    const std::string stem = p.stem().string();
    write_png((fs::path(out_dir) / (stem + "_lr.png")).string(), lr);
    nlohmann::json sidecar;
    sidecar["spec"] = nlohmann::json::parse(spec.to_json());
    sidecar["seed"] = seed;
    sidecar["source"] = p.filename().string();
    write_text((fs::path(out_dir) / (stem + "_lr.json")).string(), sidecar.dump(2));
  }
  std::cout << "degraded " << inputs.size() << " image(s) -> " << out_dir << "\n";
  return kExitOk;
}

// ---- fit-pca ----------------------------------------------------------

int cmd_fit_pca(const std::string& setting_name, int t, int n_kernels, int scale,
                std::uint64_t seed, const std::string& out_path) {
  const DegradationSetting setting = parse_setting(setting_name);
  DegradationSpec probe = sample_spec(setting, scale, seed);
  const int k = probe.kernel_size;
  if (t < 1 || t >= k * k)
    throw std::invalid_argument("t must lie in [1, kernel_size^2)");
  if (n_kernels < t + 1) throw std::invalid_argument("need more kernels than t");

  std::vector<BlurKernel> kernels;
  kernels.reserve(static_cast<std::size_t>(n_kernels));
  for (int i = 0; i < n_kernels; ++i)
    kernels.push_back(
        sample_spec(setting, scale, derive_seed(seed, static_cast<std::uint64_t>(i)))
            .make_kernel());
  const PCABasis basis = fit_pca_basis(kernels, t);
  save_pca_basis(out_path, basis);
  std::cout << "basis written to " << out_path << " hash=" << std::hex
            << pca_basis_hash(basis) << std::dec << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------

int cmd_train(const std::string& role, const std::string& stage, RunConfig cfg,
              const std::vector<std::string>& ablations) {
  for (const std::string& a : ablations) {
    if (a == "no-drp")
      cfg.train.use_drp = false;
    else if (a == "no-cl")
      cfg.train.use_cl = false;
    else if (a == "no-spatial")
      cfg.model.use_spatial_idr = false;
    else if (a == "no-channel")
      cfg.model.use_channel_idr = false;
    else if (a == "no-cb")
      cfg.model.use_idr_cb = false;
    else
      throw std::invalid_argument(
          "unknown ablation '" + a +
          "' (use no-drp|no-cl|no-spatial|no-channel|no-cb)");
  }
  cfg.train.setting = parse_setting(cfg.setting);
  cfg.train.seed = cfg.seed;
  if (cfg.dataset_root.empty()) throw std::invalid_argument("dataset_root is required");
  if (cfg.basis_path.empty()) throw std::invalid_argument("basis path is required");

  const DatasetManifest manifest = scan_dataset(cfg.dataset_root);
  const Corpus corpus = Corpus::load(manifest);
  const PCABasis basis = load_pca_basis(cfg.basis_path);

  fs::create_directories(cfg.output_dir);
  write_text((fs::path(cfg.output_dir) / (role + "_" + stage + "_config.json")).string(),
             cfg.echo_json());

  TrainResult result;
  if (role == "teacher" && stage == "stage1") {
    result = train_teacher_stage1(cfg.train, cfg.model, corpus, basis, cfg.output_dir);
  } else if (role == "teacher" && stage == "stage2") {
    if (cfg.stage1_ckpt.empty())
      throw std::invalid_argument("teacher stage2 requires --stage1-ckpt (teacher stage1)");
    result = train_teacher_stage2(cfg.train, cfg.model, corpus, basis,
                                  load_checkpoint(cfg.stage1_ckpt), cfg.output_dir);
  } else if (role == "student" && stage == "stage1") {
    if (cfg.teacher_ckpt.empty())
      throw std::invalid_argument("student stage1 requires --teacher-ckpt");
    result = train_student_stage1(cfg.train, cfg.model, corpus, basis,
                                  load_checkpoint(cfg.teacher_ckpt), cfg.output_dir);
  } else if (role == "student" && stage == "stage2") {
    if (cfg.teacher_ckpt.empty())
      throw std::invalid_argument("student stage2 requires --teacher-ckpt");
    if (cfg.stage1_ckpt.empty())
      throw std::invalid_argument("student stage2 requires --stage1-ckpt (student stage1)");
    result = train_student_stage2(cfg.train, cfg.model, corpus, basis,
                                  load_checkpoint(cfg.teacher_ckpt),
                                  load_checkpoint(cfg.stage1_ckpt), cfg.output_dir);
  } else {
    throw std::invalid_argument("unknown role/stage: " + role + " " + stage);
  }

  const auto& last = result.history.back();
  std::cout << "finished " << role << " " << stage << ": epochs="
            << result.history.size() << " l_cl=" << last.l_cl << " l_sr=" << last.l_sr
            << " l_dl=" << last.l_dl << "\n";
  return kExitOk;
}

// ---- eval -------------------------------------------------------------

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
             const std::string& grid_widths, bool export_idr, bool perturb_idr,
             double perturb_amplitude) {
  if (ckpt_path.empty()) throw std::invalid_argument("--ckpt is required");
  if (cfg.dataset_root.empty()) throw std::invalid_argument("dataset_root is required");
  if (grid_widths.empty() && !export_idr && !perturb_idr)
    throw std::invalid_argument("nothing to do: pass --grid, --export-idr or --perturb-idr");

  const CheckpointBundle ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);
  const DatasetManifest manifest = scan_dataset(cfg.dataset_root);
  const Corpus corpus = Corpus::load(manifest);

  PCABasis basis;
  const PCABasis* basis_ptr = nullptr;
  if (!cfg.basis_path.empty()) {
    basis = load_pca_basis(cfg.basis_path);
    basis_ptr = &basis;
  }

  fs::create_directories(cfg.output_dir);
  write_text((fs::path(cfg.output_dir) / "eval_config.json").string(), cfg.echo_json());

  const int scale = model->config().scale;
  if (!grid_widths.empty()) {
    std::vector<DegradationSpec> grid;
    for (double w : parse_width_list(grid_widths)) {
      DegradationSpec s;
      s.kind = KernelKind::isotropic;
      s.width = w;
      s.scale = scale;
      grid.push_back(s);
    }
    if (grid.empty()) throw std::invalid_argument("empty benchmark grid");
    const BenchReport report = run_benchmark(*model, manifest, corpus, grid, basis_ptr, cfg.seed);
    save_bench_csv((fs::path(cfg.output_dir) / "benchmark.csv").string(), report, manifest);
    print_bench_summary(report);
  }

  if (export_idr) {
    std::vector<DegradationSpec> specs;
    for (double w : {1.2, 2.4, 3.6, 0.6}) {
      DegradationSpec s;
      s.kind = KernelKind::isotropic;
      s.width = w;
      s.scale = scale;
      specs.push_back(s);
    }
    const EmbeddingDump dump =
        export_embeddings(*model, manifest, corpus, specs, basis_ptr, cfg.seed);
    save_embedding_csv((fs::path(cfg.output_dir) / "embeddings.csv").string(), dump);
    save_embedding_2d_csv((fs::path(cfg.output_dir) / "embeddings_2d.csv").string(), dump);
    const Separability sep = separability_score(dump);
    std::cout << "embeddings: silhouette=" << sep.silhouette
              << " probe_accuracy=" << sep.probe_accuracy << "\n";
  }

  if (perturb_idr) {
    DegradationSpec s;
    s.kind = KernelKind::isotropic;
    s.width = 2.4;
    s.scale = scale;
    const PerturbResult r =
        perturb_idr_eval(*model, corpus, s, perturb_amplitude, basis_ptr, cfg.seed);
    std::ostringstream csv;
    csv << "clean_psnr,perturbed_psnr\n" << r.clean_psnr << ',' << r.perturbed_psnr;
    write_text((fs::path(cfg.output_dir) / "perturb.csv").string(), csv.str());
    std::cout << "perturb: clean=" << r.clean_psnr << " perturbed=" << r.perturbed_psnr
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lightbsr: blind super-resolution degradation, training and evaluation.\n"
      "Config files are JSON; unknown keys are rejected; CLI flags override "
      "file values."};
  app.require_subcommand(1);

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "Blur-downsample-noise an image");
  std::string dg_input, dg_out = ".", dg_kind = "isotropic", dg_setting;
  DegradationSpec dg_spec;
  std::uint64_t dg_seed = 0;
  degrade_cmd->add_option("--input", dg_input, "input PNG or directory of PNGs")->required();
  degrade_cmd->add_option("--out", dg_out, "output directory");
  degrade_cmd->add_option("--kind", dg_kind, "isotropic|anisotropic");
  degrade_cmd->add_option("--width", dg_spec.width, "isotropic kernel width");
  degrade_cmd->add_option("--eig1", dg_spec.eig1, "anisotropic first eigenvalue");
  degrade_cmd->add_option("--eig2", dg_spec.eig2, "anisotropic second eigenvalue");
  degrade_cmd->add_option("--angle", dg_spec.angle, "anisotropic rotation (radians)");
  degrade_cmd->add_option("--noise", dg_spec.noise_sigma, "noise sigma on [0,255]");
  degrade_cmd->add_option("--scale", dg_spec.scale, "downsampling factor");
  degrade_cmd->add_option("--seed", dg_seed, "noise seed");
  degrade_cmd->add_option("--setting", dg_setting,
                          "validate the spec against setting1|setting2");

  // fit-pca
  auto* pca_cmd = app.add_subcommand("fit-pca", "Fit the blur-kernel PCA basis");
  std::string pc_setting = "setting1", pc_out = "basis.pca";
  int pc_t = 15, pc_n = 10000, pc_scale = 4;
  std::uint64_t pc_seed = 0;
  pca_cmd->add_option("--setting", pc_setting, "setting1|setting2");
  pca_cmd->add_option("--t", pc_t, "PCA dimension (default 15)");
  pca_cmd->add_option("--kernels", pc_n, "sampled kernel corpus size");
  pca_cmd->add_option("--scale", pc_scale, "SR scale the kernels target");
  pca_cmd->add_option("--seed", pc_seed, "corpus sampling seed");
  pca_cmd->add_option("--out", pc_out, "output basis path");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run one training stage");
  std::string tr_role, tr_stage, tr_config;
  std::string tr_dataset, tr_out, tr_basis, tr_teacher, tr_stage1;
  std::vector<std::string> tr_ablate;
  std::int64_t tr_seed = -1;
  int tr_epochs = -1, tr_steps = -1;
  train_cmd->add_option("role", tr_role, "teacher|student")->required();
  train_cmd->add_option("stage", tr_stage, "stage1|stage2")->required();
  train_cmd->add_option("--config", tr_config, "JSON run config");
  train_cmd->add_option("--dataset", tr_dataset, "dataset root (overrides config)");
  train_cmd->add_option("--out", tr_out, "output dir (overrides config)");
  train_cmd->add_option("--basis", tr_basis, "PCA basis path (overrides config)");
  train_cmd->add_option("--teacher-ckpt", tr_teacher, "teacher checkpoint");
  train_cmd->add_option("--stage1-ckpt", tr_stage1, "stage-1 checkpoint");
  train_cmd->add_option("--seed", tr_seed, "run seed (overrides config)");
  train_cmd->add_option("--epochs", tr_epochs, "epoch count for this stage");
  train_cmd->add_option("--steps", tr_steps, "steps per epoch override");
  train_cmd->add_option("--ablate", tr_ablate,
                        "no-drp|no-cl|no-spatial|no-channel|no-cb (repeatable)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Benchmark / embedding / robustness eval");
  std::string ev_config, ev_ckpt, ev_dataset, ev_out, ev_basis, ev_grid;
  bool ev_export = false, ev_perturb = false;
  double ev_amplitude = 1.0;
  std::int64_t ev_seed = -1;
  eval_cmd->add_option("--config", ev_config, "JSON run config");
  eval_cmd->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--dataset", ev_dataset, "dataset root (overrides config)");
  eval_cmd->add_option("--out", ev_out, "output dir (overrides config)");
  eval_cmd->add_option("--basis", ev_basis, "PCA basis (needed for DRP-input models)");
  eval_cmd->add_option("--grid", ev_grid, "comma-separated isotropic widths");
  eval_cmd->add_flag("--export-idr", ev_export, "dump 48-dim channel IDR embeddings");
  eval_cmd->add_flag("--perturb-idr", ev_perturb, "clean vs perturbed-IDR PSNR");
  eval_cmd->add_option("--perturb-amplitude", ev_amplitude, "perturbation amplitude");
  eval_cmd->add_option("--seed", ev_seed, "eval seed (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (degrade_cmd->parsed()) {
      if (dg_kind == "isotropic")
        dg_spec.kind = KernelKind::isotropic;
      else if (dg_kind == "anisotropic")
        dg_spec.kind = KernelKind::anisotropic;
      else
        throw std::invalid_argument("unknown kernel kind: " + dg_kind);
      return cmd_degrade(dg_input, dg_out, dg_spec, dg_setting, dg_seed);
    }
    if (pca_cmd->parsed())
      return cmd_fit_pca(pc_setting, pc_t, pc_n, pc_scale, pc_seed, pc_out);
    if (train_cmd->parsed()) {
      RunConfig cfg = tr_config.empty() ? RunConfig{} : RunConfig::from_file(tr_config);
      if (!tr_dataset.empty()) cfg.dataset_root = tr_dataset;
      if (!tr_out.empty()) cfg.output_dir = tr_out;
      if (!tr_basis.empty()) cfg.basis_path = tr_basis;
      if (!tr_teacher.empty()) cfg.teacher_ckpt = tr_teacher;
      if (!tr_stage1.empty()) cfg.stage1_ckpt = tr_stage1;
      if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
      if (tr_epochs > 0) {
        cfg.train.epochs_stage1 = tr_epochs;
        cfg.train.epochs_stage2 = tr_epochs;
      }
      if (tr_steps > 0) cfg.train.steps_per_epoch = tr_steps;
      return cmd_train(tr_role, tr_stage, std::move(cfg), tr_ablate);
    }
    if (eval_cmd->parsed()) {
      RunConfig cfg = ev_config.empty() ? RunConfig{} : RunConfig::from_file(ev_config);
      if (!ev_dataset.empty()) cfg.dataset_root = ev_dataset;
      if (!ev_out.empty()) cfg.output_dir = ev_out;
      if (!ev_basis.empty()) cfg.basis_path = ev_basis;
      if (ev_seed >= 0) cfg.seed = static_cast<std::uint64_t>(ev_seed);
      return cmd_eval(cfg, ev_ckpt, ev_grid, ev_export, ev_perturb, ev_amplitude);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
