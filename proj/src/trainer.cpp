#include "lightbsr/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

#include "lightbsr/optimizer.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;

namespace lightbsr {

void TrainConfig::validate() const {
  if (b < 1) throw std::invalid_argument("batch size must be positive");
  if (d < 2 || d > 8) throw std::invalid_argument("d must lie in [2, 8]");
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (beta < 0.0) throw std::invalid_argument("beta must be non-negative");
  if (queue_capacity < 1) throw std::invalid_argument("queue capacity must be positive");
  if (patch < 8) throw std::invalid_argument("patch must be >= 8");
  if (projection_dim < 1) throw std::invalid_argument("projection dim must be positive");
  if (epochs_stage1 < 1 || epochs_stage2 < 1)
    throw std::invalid_argument("epoch counts must be positive");
  if (lr_stage1 < 0.0 || lr_stage2_start < 0.0 || lr_stage2_end < 0.0)
    throw std::invalid_argument("learning rates must be non-negative");
  if (ldl_weight < 0.0) throw std::invalid_argument("ldl_weight must be non-negative");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["b"] = b;
  j["d"] = d;
  j["tau"] = tau;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["queue_capacity"] = queue_capacity;
  j["lr_stage1"] = lr_stage1;
  j["epochs_stage1"] = epochs_stage1;
  j["lr_stage2_start"] = lr_stage2_start;
  j["lr_stage2_end"] = lr_stage2_end;
  j["epochs_stage2"] = epochs_stage2;
  j["patch"] = patch;
  j["projection_dim"] = projection_dim;
  j["setting"] = setting == DegradationSetting::setting1 ? "setting1" : "setting2";
  j["seed"] = seed;
  j["steps_per_epoch"] = steps_per_epoch;
  j["checkpoint_every"] = checkpoint_every;
  j["use_drp"] = use_drp;
  j["use_cl"] = use_cl;
  j["momentum_in_stage2"] = momentum_in_stage2;
  j["ldl_weight"] = ldl_weight;
  j["resample_each_step"] = resample_each_step;
  j["augment_data"] = augment_data;
  j["width_pool"] = width_pool;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.b = j.value("b", c.b);
  c.d = j.value("d", c.d);
  c.tau = j.value("tau", c.tau);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
  c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
  c.epochs_stage1 = j.value("epochs_stage1", c.epochs_stage1);
  c.lr_stage2_start = j.value("lr_stage2_start", c.lr_stage2_start);
  c.lr_stage2_end = j.value("lr_stage2_end", c.lr_stage2_end);
  c.epochs_stage2 = j.value("epochs_stage2", c.epochs_stage2);
  c.patch = j.value("patch", c.patch);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  if (j.contains("setting")) {
    const std::string s = j["setting"].get<std::string>();
    if (s == "setting1")
      c.setting = DegradationSetting::setting1;
    else if (s == "setting2")
      c.setting = DegradationSetting::setting2;
    else
      throw std::invalid_argument("unknown degradation setting: " + s);
  }
  c.seed = j.value("seed", c.seed);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.use_drp = j.value("use_drp", c.use_drp);
  c.use_cl = j.value("use_cl", c.use_cl);
  c.momentum_in_stage2 = j.value("momentum_in_stage2", c.momentum_in_stage2);
  c.ldl_weight = j.value("ldl_weight", c.ldl_weight);
  c.resample_each_step = j.value("resample_each_step", c.resample_each_step);
  c.augment_data = j.value("augment_data", c.augment_data);
  if (j.contains("width_pool"))
    c.width_pool = j["width_pool"].get<std::vector<double>>();
  c.validate();
  return c;
}

void append_metrics_csv(const std::string& path, const EpochMetrics& m) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append metrics to " + path);
  if (fresh)
    out << "epoch,l_cl,l_sr,l2,lkl,l1,l_dl,lr,wall_seconds\n";
  out.precision(12);
  out << m.epoch << ',' << m.l_cl << ',' << m.l_sr << ',' << m.l2 << ','
      << m.lkl << ',' << m.l1 << ',' << m.l_dl << ',' << m.lr << ','
      << m.wall_seconds << '\n';
}

int teacher_in_channels(const TrainConfig& cfg, int t) {
  return cfg.use_drp ? t + 6 : 3;
}

Corpus Corpus::load(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw std::runtime_error("empty dataset manifest");
  Corpus c;
  c.manifest_hash = manifest.hash();
  for (const auto& e : manifest.entries)
    c.images.push_back(read_png((fs::path(manifest.root) / e.path).string()));
  return c;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

Batch sample_batch(const TrainConfig& cfg, int scale, const Corpus& corpus,
                   const PCABasis& basis, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.images.size() - 1);
  Batch batch;
  for (int i = 0; i < cfg.b; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 64)
        throw std::runtime_error("no image in the corpus supports the patch size");
      const std::size_t idx = pick(rng);
      const std::uint64_t sub = rng();
      DegradationSpec spec = sample_spec(cfg.setting, scale, derive_seed(sub, 2));
      if (!cfg.width_pool.empty()) {
        spec.kind = KernelKind::isotropic;
        spec.width = cfg.width_pool[derive_seed(sub, 5) % cfg.width_pool.size()];
      }
      try {
        const Image hr = cfg.augment_data
                             ? augment(corpus.images[idx], derive_seed(sub, 3))
                             : corpus.images[idx];
        batch.samples.push_back(
            make_train_sample(hr, spec, basis, cfg.patch, cfg.d, derive_seed(sub, 4)));
        break;
      } catch (const std::runtime_error& e) {
        std::cerr << "warning: skipping image " << idx << ": " << e.what() << "\n";
      }
    }
  }
  return batch;
}

// LR patches of one positive index, stacked to [B, 3, h, w].
Tensor stack_index(const Batch& batch, int i) {
  const Image& first = batch.samples[0].lr_patches[static_cast<std::size_t>(i)];
  Tensor out({batch.b(), 3, first.height, first.width});
  double* dst = out.data.data();
  for (const auto& s : batch.samples) {
    const Image& p = s.lr_patches[static_cast<std::size_t>(i)];
    std::copy(p.pixels.begin(), p.pixels.end(), dst);
    dst += p.pixels.size();
  }
  return out;
}

// (t+6)-channel teacher inputs of one positive index, stacked to [B, c, h, w].
Tensor stack_index_teacher(const Batch& batch, int i) {
  const Tensor first =
      concat_patch_drp(batch.samples[0].lr_patches[static_cast<std::size_t>(i)],
                       batch.samples[0].drp);
  Tensor out({batch.b(), first.dim(0), first.dim(1), first.dim(2)});
  double* dst = out.data.data();
  for (const auto& s : batch.samples) {
    const Tensor one = concat_patch_drp(s.lr_patches[static_cast<std::size_t>(i)], s.drp);
    std::copy(one.data.begin(), one.data.end(), dst);
    dst += one.data.size();
  }
  return out;
}

Tensor estimator_input(const Batch& batch, int i, bool with_drp) {
  return with_drp ? stack_index_teacher(batch, i) : stack_index(batch, i);
}

// Contrastive branch: a model's estimator feeding a projection head.
struct CLBranch {
  Model* model;
  Projector* projector;

  ad::Var project(const Tensor& x, bool train) {
    ad::Var raw = model->estimate_idr(ad::constant(x), train);
    return ad::l2_normalize_rows(projector->forward(raw, train));
  }

  // Projections for all D positive indices, constants, as [B, D, dim] plus
  // flattened [B*D, dim] rows for the queue.
  void project_all(const Batch& batch, bool with_drp, Tensor* bdd, Tensor* rows) {
    const int bsz = batch.b(), d = batch.d();
    Tensor first = project(estimator_input(batch, 0, with_drp), false).value();
    const std::int64_t dim = first.dim(1);
    *bdd = Tensor({bsz, d, dim});
    *rows = Tensor({static_cast<std::int64_t>(bsz) * d, dim});
    for (int i = 0; i < d; ++i) {
      const Tensor proj =
          i == 0 ? first : project(estimator_input(batch, i, with_drp), false).value();
      for (int bi = 0; bi < bsz; ++bi)
        for (std::int64_t k = 0; k < dim; ++k) {
          bdd->data[static_cast<std::size_t>((bi * d + i) * dim + k)] = proj.at2(bi, k);
          rows->data[static_cast<std::size_t>((bi * d + i) * dim + k)] = proj.at2(bi, k);
        }
    }
  }

  std::vector<Param*> trainables() {
    std::vector<Param*> out = model->estimator_params();
    projector->collect(out);
    return out;
  }
};

void warm_up_queue(const TrainConfig& cfg, int scale, const Corpus& corpus,
                   const PCABasis& basis, CLBranch& momentum, NegativeQueue& queue) {
  const std::size_t need = static_cast<std::size_t>(cfg.b) * cfg.d;
  std::uint64_t stream = 0;
  while (queue.size() < need) {
    const Batch batch = sample_batch(cfg, scale, corpus, basis,
                                     derive_seed(cfg.seed, 500000 + stream++));
    Tensor bdd, rows;
    momentum.project_all(batch, cfg.use_drp, &bdd, &rows);
    queue.enqueue_rows(rows);
  }
}

nlohmann::json combined_config(const TrainConfig& cfg, const ModelConfig& mcfg) {
  nlohmann::json j;
  j["train"] = nlohmann::json::parse(cfg.to_json());
  j["model"] = nlohmann::json::parse(mcfg.to_json());
  return j;
}

CheckpointBundle make_bundle(const std::string& stage, const TrainConfig& cfg,
                             const ModelConfig& mcfg, const PCABasis& basis,
                             std::int64_t opt_step) {
  CheckpointBundle ckpt;
  ckpt.stage = stage;
  ckpt.config_json = combined_config(cfg, mcfg).dump();
  ckpt.pca_hash = pca_basis_hash(basis);
  ckpt.optimizer_step = opt_step;
  return ckpt;
}

void emit(const std::string& out_dir, const std::string& stage,
          const CheckpointBundle& ckpt, const EpochMetrics& m) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / (stage + ".ckpt")).string(), ckpt);
  append_metrics_csv((fs::path(out_dir) / (stage + "_metrics.csv")).string(), m);
}

int resolve_steps(const TrainConfig& cfg, const Corpus& corpus) {
  if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
  return static_cast<int>((corpus.images.size() + cfg.b - 1) /
                          static_cast<std::size_t>(cfg.b));
}

}  // namespace

TrainResult train_teacher_stage1(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const std::string& out_dir) {
  cfg.validate();
  ModelConfig tm = mcfg;
  tm.in_channels = teacher_in_channels(cfg, basis.t);

  Model principal(tm, derive_seed(cfg.seed, 100));
  Model momentum_model(tm, derive_seed(cfg.seed, 100));
  InitRng prj_rng(derive_seed(cfg.seed, 101));
  InitRng prj_rng_m(derive_seed(cfg.seed, 101));
  Projector proj_p("projector", tm.estimator_widths.back(), cfg.projection_dim, prj_rng);
  Projector proj_m("projector", tm.estimator_widths.back(), cfg.projection_dim, prj_rng_m);

  CLBranch p_branch{&principal, &proj_p};
  CLBranch m_branch{&momentum_model, &proj_m};
  std::vector<Param*> theta_p = p_branch.trainables();
  std::vector<Param*> theta_m = m_branch.trainables();

  NegativeQueue queue(static_cast<std::size_t>(cfg.queue_capacity), cfg.projection_dim);
  warm_up_queue(cfg, tm.scale, corpus, basis, m_branch, queue);

  AdamOptimizer opt(theta_p);
  const int steps = resolve_steps(cfg, corpus);
  TrainResult result;
  Batch fixed;
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    const auto t0 = clock_type::now();
    double sum_cl = 0.0;
    for (int step = 0; step < steps; ++step, ++global_step) {
      Batch batch;
      if (cfg.resample_each_step || global_step == 0) {
        batch = sample_batch(cfg, tm.scale, corpus, basis,
                             derive_seed(cfg.seed, 1000000 + static_cast<std::uint64_t>(global_step)));
        if (!cfg.resample_each_step) fixed = batch;
      } else {
        batch = fixed;
      }

      Tensor m_bdd, m_rows;
      m_branch.project_all(batch, cfg.use_drp, &m_bdd, &m_rows);
      std::vector<ad::Var> p;
      for (int i = 0; i < cfg.d; ++i)
        p.push_back(p_branch.project(estimator_input(batch, i, cfg.use_drp), true));
      ad::Var loss = contrastive_loss(p, m_bdd, queue, cfg.tau);
      sum_cl += loss.value()[0];

      opt.zero_grad();
      ad::backward(loss);
      opt.step(cfg.lr_stage1);
      momentum_update(theta_m, theta_p, cfg.alpha);
      queue.enqueue_rows(m_rows);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.l_cl = sum_cl / steps;
    m.lr = cfg.lr_stage1;
    m.wall_seconds = seconds_since(t0);
    result.history.push_back(m);

    const bool last = epoch + 1 == cfg.epochs_stage1;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
      CheckpointBundle ckpt = make_bundle("teacher_stage1", cfg, tm, basis, opt.step_count());
      ckpt.put_params(principal.params(), "model/");
      std::vector<Param*> pp;
      proj_p.collect(pp);
      ckpt.put_params(pp, "projector/");
      ckpt.put_params(momentum_model.estimator_params(), "momentum_model/");
      std::vector<Param*> pm;
      proj_m.collect(pm);
      ckpt.put_params(pm, "momentum_projector/");
      emit(out_dir, "teacher_stage1", ckpt, m);
      if (last) result.checkpoint = std::move(ckpt);
    } else if (!out_dir.empty()) {
      append_metrics_csv((fs::path(out_dir) / "teacher_stage1_metrics.csv").string(), m);
    }
  }
  return result;
}

TrainResult train_teacher_stage2(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& stage1,
                                 const std::string& out_dir) {
  cfg.validate();
  if (stage1.stage != "teacher_stage1")
    throw std::runtime_error("expected a teacher_stage1 checkpoint, got " + stage1.stage);
  ModelConfig tm = mcfg;
  tm.in_channels = teacher_in_channels(cfg, basis.t);

  Model principal(tm, derive_seed(cfg.seed, 200));
  Model momentum_model(tm, derive_seed(cfg.seed, 200));
  InitRng prj_rng(derive_seed(cfg.seed, 201));
  InitRng prj_rng_m(derive_seed(cfg.seed, 201));
  Projector proj_p("projector", tm.estimator_widths.back(), cfg.projection_dim, prj_rng);
  Projector proj_m("projector", tm.estimator_widths.back(), cfg.projection_dim, prj_rng_m);

  stage1.load_into(principal.params(), "model/", false);
  stage1.load_into(momentum_model.estimator_params(), "momentum_model/", false);
  std::vector<Param*> pp;
  proj_p.collect(pp);
  stage1.load_into(pp, "projector/", false);
  std::vector<Param*> pm;
  proj_m.collect(pm);
  stage1.load_into(pm, "momentum_projector/", false);

  CLBranch p_branch{&principal, &proj_p};
  CLBranch m_branch{&momentum_model, &proj_m};
  std::vector<Param*> theta_p = p_branch.trainables();
  std::vector<Param*> theta_m = m_branch.trainables();

  NegativeQueue queue(static_cast<std::size_t>(cfg.queue_capacity), cfg.projection_dim);
  if (cfg.use_cl) warm_up_queue(cfg, tm.scale, corpus, basis, m_branch, queue);

  std::vector<Param*> trainables = principal.params();
  if (cfg.use_cl) proj_p.collect(trainables);
  AdamOptimizer opt(trainables);

  const int steps = resolve_steps(cfg, corpus);
  TrainResult result;
  Batch fixed;
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    const auto t0 = clock_type::now();
    const double lr = cosine_lr(cfg.lr_stage2_start, cfg.lr_stage2_end, epoch,
                                cfg.epochs_stage2);
    double sum_cl = 0.0, sum_sr = 0.0;
    for (int step = 0; step < steps; ++step, ++global_step) {
      Batch batch;
      if (cfg.resample_each_step || global_step == 0) {
        batch = sample_batch(cfg, tm.scale, corpus, basis,
                             derive_seed(cfg.seed, 2000000 + static_cast<std::uint64_t>(global_step)));
        if (!cfg.resample_each_step) fixed = batch;
      } else {
        batch = fixed;
      }

      const ad::Var lr_in = ad::constant(stack_index(batch, 0));
      const ad::Var est_in = ad::constant(estimator_input(batch, 0, cfg.use_drp));
      const ad::Var hr = ad::constant(stack_hr_targets(batch));
      ad::Var sr = principal.forward(lr_in, est_in, true);
      ad::Var loss = sr_loss(sr, hr);
      sum_sr += loss.value()[0];

      Tensor m_rows;
      if (cfg.use_cl) {
        Tensor m_bdd;
        m_branch.project_all(batch, cfg.use_drp, &m_bdd, &m_rows);
        std::vector<ad::Var> p;
        for (int i = 0; i < cfg.d; ++i)
          p.push_back(p_branch.project(estimator_input(batch, i, cfg.use_drp), true));
        ad::Var lcl = contrastive_loss(p, m_bdd, queue, cfg.tau);
        sum_cl += lcl.value()[0];
        loss = ad::add(loss, lcl);
      }

      opt.zero_grad();
      ad::backward(loss);
      opt.step(lr);
      if (cfg.use_cl && cfg.momentum_in_stage2) {
        momentum_update(theta_m, theta_p, cfg.alpha);
        queue.enqueue_rows(m_rows);
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.l_cl = cfg.use_cl ? sum_cl / steps : 0.0;
    m.l_sr = sum_sr / steps;
    m.lr = lr;
    m.wall_seconds = seconds_since(t0);
    result.history.push_back(m);

    const bool last = epoch + 1 == cfg.epochs_stage2;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
      CheckpointBundle ckpt = make_bundle("teacher_stage2", cfg, tm, basis, opt.step_count());
      ckpt.put_params(principal.params(), "model/");
      std::vector<Param*> pvec;
      proj_p.collect(pvec);
      ckpt.put_params(pvec, "projector/");
      ckpt.put_params(momentum_model.estimator_params(), "momentum_model/");
      std::vector<Param*> mvec;
      proj_m.collect(mvec);
      ckpt.put_params(mvec, "momentum_projector/");
      emit(out_dir, "teacher_stage2", ckpt, m);
      if (last) result.checkpoint = std::move(ckpt);
    } else if (!out_dir.empty()) {
      append_metrics_csv((fs::path(out_dir) / "teacher_stage2_metrics.csv").string(), m);
    }
  }
  return result;
}

namespace {

IDRPairTensors teacher_idr(Model& teacher, const Tensor& input) {
  ad::Var raw = teacher.estimate_idr(ad::constant(input), false);
  IDRPair pair = teacher.convert_idr(raw, false);
  return {pair.spatial.value(), pair.channel.value()};
}

}  // namespace

TrainResult train_student_stage1(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& teacher_ckpt,
                                 const std::string& out_dir) {
  cfg.validate();
  auto teacher = model_from_checkpoint(teacher_ckpt, derive_seed(cfg.seed, 299));
  ModelConfig sm = mcfg;
  sm.in_channels = 3;
  Model student(sm, derive_seed(cfg.seed, 300));

  std::vector<Param*> trainables = student.estimator_params();
  for (Param* p : student.converter_params()) trainables.push_back(p);
  AdamOptimizer opt(trainables);

  const int steps = resolve_steps(cfg, corpus);
  TrainResult result;
  Batch fixed;
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    const auto t0 = clock_type::now();
    double s2 = 0.0, skl = 0.0, s1 = 0.0, sdl = 0.0;
    for (int step = 0; step < steps; ++step, ++global_step) {
      Batch batch;
      if (cfg.resample_each_step || global_step == 0) {
        batch = sample_batch(cfg, sm.scale, corpus, basis,
                             derive_seed(cfg.seed, 3000000 + static_cast<std::uint64_t>(global_step)));
        if (!cfg.resample_each_step) fixed = batch;
      } else {
        batch = fixed;
      }

      const IDRPairTensors target =
          teacher_idr(*teacher, estimator_input(batch, 0, cfg.use_drp));
      ad::Var raw = student.estimate_idr(ad::constant(stack_index(batch, 0)), true);
      IDRPair spair = student.convert_idr(raw, true);
      DistillLosses dl = distill_losses(target, spair, cfg.beta);
      s2 += dl.l2.value()[0];
      skl += dl.lkl.value()[0];
      s1 += dl.l1.value()[0];
      sdl += dl.total.value()[0];

      opt.zero_grad();
      ad::backward(dl.total);
      opt.step(cfg.lr_stage1);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.l2 = s2 / steps;
    m.lkl = skl / steps;
    m.l1 = s1 / steps;
    m.l_dl = sdl / steps;
    m.lr = cfg.lr_stage1;
    m.wall_seconds = seconds_since(t0);
    result.history.push_back(m);

    const bool last = epoch + 1 == cfg.epochs_stage1;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
      CheckpointBundle ckpt = make_bundle("student_stage1", cfg, sm, basis, opt.step_count());
      ckpt.put_params(student.params(), "model/");
      emit(out_dir, "student_stage1", ckpt, m);
      if (last) result.checkpoint = std::move(ckpt);
    } else if (!out_dir.empty()) {
      append_metrics_csv((fs::path(out_dir) / "student_stage1_metrics.csv").string(), m);
    }
  }
  return result;
}

TrainResult train_student_stage2(const TrainConfig& cfg, const ModelConfig& mcfg,
                                 const Corpus& corpus, const PCABasis& basis,
                                 const CheckpointBundle& teacher_ckpt,
                                 const CheckpointBundle& stage1,
                                 const std::string& out_dir) {
  cfg.validate();
  if (stage1.stage != "student_stage1")
    throw std::runtime_error("expected a student_stage1 checkpoint, got " + stage1.stage);
  std::unique_ptr<Model> teacher;
  if (cfg.ldl_weight > 0.0)
    teacher = model_from_checkpoint(teacher_ckpt, derive_seed(cfg.seed, 399));

  ModelConfig sm = mcfg;
  sm.in_channels = 3;
  Model student(sm, derive_seed(cfg.seed, 400));
  stage1.load_into(student.params(), "model/", false);

  AdamOptimizer opt(student.params());
  const int steps = resolve_steps(cfg, corpus);
  TrainResult result;
  Batch fixed;
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    const auto t0 = clock_type::now();
    const double lr = cosine_lr(cfg.lr_stage2_start, cfg.lr_stage2_end, epoch,
                                cfg.epochs_stage2);
    double ssr = 0.0, s2 = 0.0, skl = 0.0, s1 = 0.0, sdl = 0.0;
    for (int step = 0; step < steps; ++step, ++global_step) {
      Batch batch;
      if (cfg.resample_each_step || global_step == 0) {
        batch = sample_batch(cfg, sm.scale, corpus, basis,
                             derive_seed(cfg.seed, 4000000 + static_cast<std::uint64_t>(global_step)));
        if (!cfg.resample_each_step) fixed = batch;
      } else {
        batch = fixed;
      }

      const ad::Var lr_in = ad::constant(stack_index(batch, 0));
      ad::Var raw = student.estimate_idr(lr_in, true);
      IDRPair spair = student.convert_idr(raw, true);
      ad::Var f = student.extract_features(lr_in, true);
      f = student.adapt_module(f, spair, true);
      ad::Var sr = student.upscale(f, true);

      ad::Var loss = sr_loss(sr, ad::constant(stack_hr_targets(batch)));
      ssr += loss.value()[0];
      if (teacher) {
        const IDRPairTensors target =
            teacher_idr(*teacher, estimator_input(batch, 0, cfg.use_drp));
        DistillLosses dl = distill_losses(target, spair, cfg.beta);
        s2 += dl.l2.value()[0];
        skl += dl.lkl.value()[0];
        s1 += dl.l1.value()[0];
        sdl += dl.total.value()[0];
        loss = ad::add(loss, ad::scale(dl.total, cfg.ldl_weight));
      }

      opt.zero_grad();
      ad::backward(loss);
      opt.step(lr);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.l_sr = ssr / steps;
    m.l2 = s2 / steps;
    m.lkl = skl / steps;
    m.l1 = s1 / steps;
    m.l_dl = sdl / steps;
    m.lr = lr;
    m.wall_seconds = seconds_since(t0);
    result.history.push_back(m);

    const bool last = epoch + 1 == cfg.epochs_stage2;
    if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
      CheckpointBundle ckpt = make_bundle("student_stage2", cfg, sm, basis, opt.step_count());
      ckpt.put_params(student.params(), "model/");
      emit(out_dir, "student_stage2", ckpt, m);
      if (last) result.checkpoint = std::move(ckpt);
    } else if (!out_dir.empty()) {
      append_metrics_csv((fs::path(out_dir) / "student_stage2_metrics.csv").string(), m);
    }
  }
  return result;
}

std::unique_ptr<Model> model_from_checkpoint(const CheckpointBundle& ckpt,
                                             std::uint64_t init_seed) {
  const auto j = nlohmann::json::parse(ckpt.config_json);
  if (!j.contains("model"))
    throw std::runtime_error("checkpoint config lacks a model section");
  const ModelConfig mcfg = ModelConfig::from_json(j["model"].dump());
  auto model = std::make_unique<Model>(mcfg, init_seed);
  ckpt.load_into(model->params(), "model/", false);
  return model;
}

}  // namespace lightbsr
