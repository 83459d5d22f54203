#pragma once

// Two-stage training, prediction and evaluation on top of the model modules.
// Training runs in float32 so checkpoints hold parameters exactly and a
// resumed run continues bit-for-bit. Every random draw is derived from
// (seed, stage, step, sample), so resuming needs no stored generator state.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/checkpoint.hpp"
#include "mcld/config.hpp"
#include "mcld/dataset_io.hpp"
#include "mcld/diffusion.hpp"
#include "mcld/domain.hpp"
#include "mcld/error.hpp"
#include "mcld/krp.hpp"
#include "mcld/mae.hpp"
#include "mcld/metrics.hpp"
#include "mcld/nn.hpp"
#include "mcld/optim.hpp"
#include "mcld/rng.hpp"
#include "mcld/synthdata.hpp"
#include "mcld/vae.hpp"

namespace mcld {

using Real = float;

struct ModelSet {
  RunConfig cfg;
  SkeletonSpec skeleton;
  ParamStore<Real> store;
  VaeModel<Real> vae;
  KrpModel<Real> krp;
  MaeModel<Real> mae;
  McfModel<Real> mcf;
  DenoiserModel<Real> denoiser;
  DiffusionSchedule schedule;
};

/// Fresh parameters. Each module draws from its own stream so one module's
/// size never shifts another module's initialization.
inline ModelSet build_models(const RunConfig& cfg, const SkeletonSpec& skeleton) {
  cfg.validate();
  const ValidationReport r = validate_skeleton(skeleton);
  if (!r.ok()) throw Error(ErrorCode::kBadConfig, r.issues.front());
  ModelSet ms;
  ms.cfg = cfg;
  ms.skeleton = skeleton;
  const RngHandle init(cfg.seed, 0x1417);
  const int T = cfg.data.history_frames, dT = cfg.data.future_frames, J = skeleton.joint_count;
  const int C = cfg.vae.latent_dim;
  MaeConfig mae = cfg.mae;
  mae.latent_dim = C;
  ms.vae = make_vae(ms.store, cfg.vae, dT, J, init.derive(1));
  ms.krp = make_krp(ms.store, cfg.krp, T, J, skeleton.root_index, init.derive(2));
  ms.mae = make_mae(ms.store, mae, T, J, init.derive(3));
  ms.mcf = make_mcf(ms.store, cfg.fusion, C, init.derive(4));
  ms.denoiser = make_denoiser(ms.store, cfg.denoiser, C, cfg.fusion.output_dim(C), init.derive(5));
  ms.schedule = make_schedule(cfg.schedule);
  if (!cfg.krp_enabled) ms.store.set_trainable("krp.", false);
  return ms;
}

/// Mean distance over bone edges, frames and samples (history and future).
inline double mean_bone_length(const std::vector<Sample>& samples, const SkeletonSpec& skeleton) {
  double sum = 0.0;
  long n = 0;
  for (const auto& s : samples) {
    for (const MotionSequence* m : {&s.history, &s.future}) {
      for (int f = 0; f < m->frame_count(); ++f) {
        for (const auto& [a, b] : skeleton.bone_edges) {
          sum += (m->joint(f, a) - m->joint(f, b)).norm();
          ++n;
        }
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

struct StepLog {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;      // stage objective, batch mean
  double l_mr = 0.0;      // stage 1 only
  double l_kl = 0.0;      // stage 1 only
  double grad_norm = 0.0; // before clipping
  int region_fallbacks = 0;
};

struct TrainOptions {
  std::string out_dir;                       // last-good checkpoint on failure; empty disables
  long stop_after_step = -1;                 // stop once this many steps are done (interruption)
  std::function<void(const StepLog&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every train.checkpoint_every steps
  std::ostream* log = nullptr;               // per-epoch summaries
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  bool finished = false;
};

namespace detail {

inline constexpr std::uint64_t kStage1Stream = 0x5701;
inline constexpr std::uint64_t kStage2Stream = 0x5702;

inline Mat<Real> row_of(const Eigen::VectorXd& v) { return v.transpose().cast<Real>(); }

inline Mat<Real> normal_row(int dim, RngHandle& rng) {
  Mat<Real> m(1, dim);
  for (int i = 0; i < dim; ++i) m(0, i) = static_cast<Real>(rng.normal());
  return m;
}

/// Batch order for one epoch, a deterministic shuffle.
inline std::vector<int> epoch_order(std::uint64_t seed, std::uint64_t stream, int epoch, int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngHandle rng = RngHandle(seed, stream).derive(static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

inline RngHandle sample_rng(std::uint64_t seed, std::uint64_t stream, long step, int slot) {
  return RngHandle(seed, stream + 1).derive(static_cast<std::uint64_t>(step)).derive(static_cast<std::uint64_t>(slot));
}

inline std::vector<CenteredSample> center_all(const std::vector<Sample>& samples, const SkeletonSpec& skeleton) {
  std::vector<CenteredSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const ValidationReport r = validate_sample(s, skeleton);
    if (!r.ok()) throw Error(ErrorCode::kSchemaViolation, "invalid sample: " + r.issues.front());
    out.push_back(center_sample(s, skeleton.root_index));
  }
  return out;
}

inline void check_shapes(const RunConfig& cfg, const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    if (s.history.frame_count() != cfg.data.history_frames || s.future.frame_count() != cfg.data.future_frames)
      throw Error(ErrorCode::kShapeMismatch, "dataset frame counts (" + std::to_string(s.history.frame_count()) + ", " +
                                                 std::to_string(s.future.frame_count()) + ") differ from the config");
  }
}

inline Checkpoint make_checkpoint(const ModelSet& ms, const std::string& stage, long step, const AdamW<Real>* opt) {
  Checkpoint ck;
  ck.stage = stage;
  ck.step = step;
  ck.config = to_flat_json(ms.cfg);
  ck.skeleton = skeleton_to_json(ms.skeleton);
  capture_params(ck, ms.store, stage == "vae" ? "vae." : "", opt);
  if (stage == "diffusion") ck.schedule_alpha = ms.schedule.alpha;
  return ck;
}

inline void save_last_good(const ModelSet& ms, const std::string& stage, long step, const AdamW<Real>& opt,
                           const TrainOptions& opts) {
  if (opts.out_dir.empty()) return;
  save_checkpoint(make_checkpoint(ms, stage, step, &opt), opts.out_dir + "/" + stage + "_last_good.ckpt");
}

inline void log_epoch(const TrainOptions& opts, const char* stage, int epoch, const std::vector<StepLog>& log,
                      std::size_t first) {
  if (!opts.log || first >= log.size()) return;
  double loss = 0.0, mr = 0.0, kl = 0.0;
  for (std::size_t i = first; i < log.size(); ++i) {
    loss += log[i].loss;
    mr += log[i].l_mr;
    kl += log[i].l_kl;
  }
  const double n = static_cast<double>(log.size() - first);
  *opts.log << stage << " epoch " << epoch << " step " << log.back().step + 1 << " loss " << loss / n;
  if (std::string(stage) == "vae") *opts.log << " l_mr " << mr / n << " l_kl " << kl / n;
  *opts.log << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1

struct VaeStepLoss {
  double total = 0.0;
  double l_mr = 0.0;
  double l_kl = 0.0;
};

/// Forward and backward for one future motion; gradients are scaled by
/// `weight` and added into `grads`.
inline VaeStepLoss vae_sample_grad(const ModelSet& ms, const RowMatrixXd& future, RngHandle rng, double weight,
                                   std::vector<Mat<Real>>& grads) {
  Tape<Real> tape(true);
  Net<Real> net{tape, ms.store};
  Var<Real> target = tape.constant(future.cast<Real>());
  GaussianParams<Real> g = vae_encode(net, ms.vae, target);
  Var<Real> z = reparameterize(g.mu, g.sigma, tape.constant(detail::normal_row(ms.cfg.vae.latent_dim, rng)));
  Var<Real> recon = vae_decode(net, ms.vae, z);
  VaeLoss<Real> loss = vae_loss(target, recon, g.mu, g.log_sigma, ms.cfg.vae);
  tape.backward(ag::scale(loss.total, static_cast<Real>(weight)));
  tape.collect_param_grads(grads);
  return {loss.total.scalar(), loss.l_mr.scalar(), loss.l_kl.scalar()};
}

inline TrainResult train_vae(const RunConfig& cfg, const std::vector<Sample>& data, const SkeletonSpec& skeleton,
                             const TrainOptions& opts = {}, const Checkpoint* resume = nullptr) {
  if (data.empty()) throw Error(ErrorCode::kBadConfig, "train_vae: empty dataset");
  detail::check_shapes(cfg, data);
  ModelSet ms = build_models(cfg, skeleton);
  for (int i = 0; i < ms.store.size(); ++i)
    if (ms.store.name(i).rfind("vae.", 0) != 0) ms.store.set_trainable(ms.store.name(i), false);
  AdamW<Real> opt(ms.store, cfg.optimizer);
  long start = 0;
  if (resume) {
    if (resume->stage != "vae") throw Error(ErrorCode::kBadCheckpoint, "resume checkpoint is not a stage-1 checkpoint");
    restore_params(*resume, ms.store, "vae.", &opt);
    start = resume->step;
  }
  const std::vector<CenteredSample> centered = detail::center_all(data, skeleton);
  const int n = static_cast<int>(data.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(per_epoch) * cfg.stage1_epochs;

  TrainResult result;
  std::size_t epoch_first = 0;
  long step = start;
  for (; step < total; ++step) {
    if (opts.stop_after_step >= 0 && step >= opts.stop_after_step) break;
    const int epoch = static_cast<int>(step / per_epoch);
    const int b = static_cast<int>(step % per_epoch);
    const std::vector<int> order = detail::epoch_order(cfg.seed, detail::kStage1Stream, epoch, n);
    const int lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
    opt.set_lr(scheduled_lr(cfg.optimizer.lr, cfg.lr_decay, step, total));
    std::vector<Mat<Real>> grads = ms.store.zero_grads();
    StepLog entry;
    entry.step = step;
    entry.epoch = epoch;
    try {
      for (int i = lo; i < hi; ++i) {
        const VaeStepLoss l =
            vae_sample_grad(ms, centered[order[i]].sample.future.frames,
                            detail::sample_rng(cfg.seed, detail::kStage1Stream, step, i - lo), 1.0 / (hi - lo), grads);
        entry.loss += l.total / (hi - lo);
        entry.l_mr += l.l_mr / (hi - lo);
        entry.l_kl += l.l_kl / (hi - lo);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteLoss) detail::save_last_good(ms, "vae", step, opt, opts);
      throw;
    }
    entry.grad_norm = global_norm(grads);
    opt.step(ms.store, grads);
    result.log.push_back(entry);
    if (opts.on_step) opts.on_step(entry);
    if (opts.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      opts.on_checkpoint(detail::make_checkpoint(ms, "vae", step + 1, &opt));
    if (b == per_epoch - 1) {
      detail::log_epoch(opts, "vae", epoch, result.log, epoch_first);
      epoch_first = result.log.size();
    }
  }
  result.finished = step >= total;
  result.checkpoint = detail::make_checkpoint(ms, "vae", step, &opt);
  return result;
}

/// Model set with the parameters of a checkpoint. A stage-1 checkpoint only
/// fills the VAE; everything else keeps its seeded initialization.
inline ModelSet load_models(const Checkpoint& ck) {
  RunConfig cfg = profile_by_name(ck.config.value("profile", std::string("desk")));
  apply_flat_json(cfg, ck.config);
  ModelSet ms = build_models(cfg, skeleton_from_json(ck.skeleton));
  if (ck.stage == "vae") {
    restore_params(ck, ms.store, "vae.");
  } else if (ck.stage == "diffusion") {
    restore_params(ck, ms.store, "");
    ms.schedule = schedule_from_alpha(ck.schedule_alpha);
  } else {
    throw Error(ErrorCode::kBadCheckpoint, "unknown checkpoint stage '" + ck.stage + "'");
  }
  return ms;
}

// ---------------------------------------------------------------------------
// Stage 2

struct RegionInput {
  Mat<Real> points;               // selected scene points before masking
  bool masked = false;            // soft-mask weights apply
  bool fallback = false;          // region was empty, whole scene used
};

/// Selects the region points for one training sample from the current box.
inline RegionInput training_region(const ModelSet& ms, const ScenePointCloud& scene, const KeyRegionBox* box,
                                   RngHandle& rng) {
  RegionInput out;
  const int n = ms.cfg.region_points;
  if (box) {
    Eigen::VectorXd w(scene.size());
    for (int i = 0; i < scene.size(); ++i)
      w[i] = soft_box_weight(scene.points.row(i).transpose(), *box, ms.cfg.krp.soft_tau);
    try {
      out.points = gather_points(scene.points, select_region_indices(w, n, rng)).points.cast<Real>();
      out.masked = true;
      return out;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyRegion) throw;
      out.fallback = true;
    }
  }
  out.points = subsample_scene(scene, n, rng).points.cast<Real>();
  return out;
}

struct DiffusionStepLoss {
  double loss = 0.0;
  bool fallback = false;
};

/// Noise-prediction loss for one centered sample with a fixed z0, gradients scaled by
/// `weight` into `grads`.
inline DiffusionStepLoss diffusion_sample_grad(const ModelSet& ms, const Sample& centered, const Eigen::VectorXd& z0,
                                               RngHandle rng, double weight, std::vector<Mat<Real>>& grads) {
  Tape<Real> tape(true);
  Net<Real> net{tape, ms.store};
  DiffusionStepLoss out;
  Var<Real> region;
  if (ms.cfg.krp_enabled) {
    const double bound = ms.cfg.krp.max_volume_ratio * detail::scene_bbox_volume(centered.scene);
    Var<Real> box_row = propose_region_var(net, ms.krp, centered.history, bound);
    const KeyRegionBox box = box_from_row(box_row.value().row(0).cast<double>());
    RegionInput r = training_region(ms, centered.scene, &box, rng);
    out.fallback = r.fallback;
    Var<Real> pts = tape.constant(r.points);
    region = r.masked ? ag::mul_col(pts, soft_box_weights(box_row, r.points, static_cast<Real>(ms.cfg.krp.soft_tau)))
                      : pts;
  } else {
    region = tape.constant(training_region(ms, centered.scene, nullptr, rng).points);
  }
  ConditionVars<Real> cond = encode_conditions(net, ms.mae, tape.constant(centered.history.frames.cast<Real>()), region);
  const int k = static_cast<int>(rng.uniform_int(1, ms.schedule.steps));
  Eigen::VectorXd eps(z0.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  const Eigen::VectorXd zk = forward_noise_jump(z0, k, eps, ms.schedule);
  FusedCondition<Real> fused = fuse_step(net, ms.mcf, cond, k);
  Var<Real> eps_hat = predict_noise(net, ms.denoiser, tape.constant(detail::row_of(zk)), fused.joint, k);
  Var<Real> loss = noise_prediction_loss(tape.constant(detail::row_of(eps)), eps_hat);
  out.loss = loss.scalar();
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::kNonFiniteLoss, "diffusion loss is not finite");
  tape.backward(ag::scale(loss, static_cast<Real>(weight)));
  tape.collect_param_grads(grads);
  return out;
}

/// Encoder means of the centered futures; the targets of stage 2.
inline std::vector<Eigen::VectorXd> latent_targets(const ModelSet& ms, const std::vector<CenteredSample>& centered) {
  VaeInference<Real> vae{ms.store, ms.vae};
  std::vector<Eigen::VectorXd> out;
  out.reserve(centered.size());
  for (const auto& c : centered) out.push_back(vae.encode(c.sample.future).first);
  return out;
}

inline TrainResult train_diffusion(const RunConfig& cfg, const std::vector<Sample>& data, const Checkpoint* vae_ckpt,
                                   const TrainOptions& opts = {}, const Checkpoint* resume = nullptr) {
  if (!vae_ckpt || vae_ckpt->stage != "vae")
    throw Error(ErrorCode::kMissingStage1, "diffusion training needs a stage-1 (vae) checkpoint");
  if (data.empty()) throw Error(ErrorCode::kBadConfig, "train_diffusion: empty dataset");
  // The VAE architecture and data shape come from the stage-1 run.
  RunConfig run = cfg;
  {
    RunConfig stage1 = profile_by_name(vae_ckpt->config.value("profile", std::string("desk")));
    apply_flat_json(stage1, vae_ckpt->config);
    run.vae = stage1.vae;
    run.data = stage1.data;
  }
  detail::check_shapes(run, data);
  const SkeletonSpec skeleton = skeleton_from_json(vae_ckpt->skeleton);
  ModelSet ms = build_models(run, skeleton);
  restore_params(*vae_ckpt, ms.store, "vae.");
  ms.store.set_trainable("vae.", false);
  AdamW<Real> opt(ms.store, run.optimizer);
  opt.set_lr_scale(ms.store, "krp.", run.krp_lr_scale);
  long start = 0;
  if (resume) {
    if (resume->stage != "diffusion") throw Error(ErrorCode::kBadCheckpoint, "resume checkpoint is not a stage-2 checkpoint");
    restore_params(*resume, ms.store, "", &opt);
    start = resume->step;
  }

  const std::vector<CenteredSample> centered = detail::center_all(data, skeleton);
  const std::vector<Eigen::VectorXd> z0 = latent_targets(ms, centered);
  const int n = static_cast<int>(data.size());
  const int per_epoch = (n + run.batch_size - 1) / run.batch_size;
  const long total = static_cast<long>(per_epoch) * run.stage2_epochs;

  TrainResult result;
  std::size_t epoch_first = 0;
  long step = start;
  for (; step < total; ++step) {
    if (opts.stop_after_step >= 0 && step >= opts.stop_after_step) break;
    const int epoch = static_cast<int>(step / per_epoch);
    const int b = static_cast<int>(step % per_epoch);
    const std::vector<int> order = detail::epoch_order(run.seed, detail::kStage2Stream, epoch, n);
    const int lo = b * run.batch_size, hi = std::min(n, lo + run.batch_size);
    opt.set_lr(scheduled_lr(run.optimizer.lr, run.lr_decay, step, total));
    std::vector<Mat<Real>> grads = ms.store.zero_grads();
    StepLog entry;
    entry.step = step;
    entry.epoch = epoch;
    try {
      for (int i = lo; i < hi; ++i) {
        const int idx = order[i];
        const DiffusionStepLoss l =
            diffusion_sample_grad(ms, centered[idx].sample, z0[idx],
                                  detail::sample_rng(run.seed, detail::kStage2Stream, step, i - lo), 1.0 / (hi - lo), grads);
        entry.loss += l.loss / (hi - lo);
        entry.region_fallbacks += l.fallback ? 1 : 0;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteLoss) detail::save_last_good(ms, "diffusion", step, opt, opts);
      throw;
    }
    entry.grad_norm = clip_global_norm(grads, run.clip_norm);
    opt.step(ms.store, grads);
    result.log.push_back(entry);
    if (opts.on_step) opts.on_step(entry);
    if (opts.on_checkpoint && run.checkpoint_every > 0 && (step + 1) % run.checkpoint_every == 0)
      opts.on_checkpoint(detail::make_checkpoint(ms, "diffusion", step + 1, &opt));
    if (b == per_epoch - 1) {
      detail::log_epoch(opts, "diffusion", epoch, result.log, epoch_first);
      epoch_first = result.log.size();
    }
  }
  result.finished = step >= total;
  result.checkpoint = detail::make_checkpoint(ms, "diffusion", step, &opt);
  return result;
}

// ---------------------------------------------------------------------------
// Inference

struct PreparedInput {
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  std::optional<KeyRegionBox> box;  // centered coordinates; empty when KRP is off
  bool fallback = false;            // region was empty, whole scene used
  ConditionBundle conditions;
};

/// Centering, key region, subsampling and condition encoding for one input.
inline PreparedInput prepare_input(const ModelSet& ms, const MotionSequence& history, const ScenePointCloud& scene,
                                   RngHandle rng, AttentionProbe* probe = nullptr) {
  Sample s;
  s.history = history;
  s.future = MotionSequence(1, history.joint_count(), history.fps);
  s.scene = scene;
  const CenteredSample c = center_sample(s, ms.skeleton.root_index);
  PreparedInput out;
  out.offset = c.offset;
  ScenePointCloud region;
  if (ms.cfg.krp_enabled) {
    out.box = propose_region(ms.store, ms.krp, c.sample.history, &c.sample.scene);
    const MaskedScene masked = mask_scene(c.sample.scene, *out.box, MaskMode::kHard);
    try {
      region = subsample_region(masked.points, masked.weights, ms.cfg.region_points, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyRegion) throw;
      out.fallback = true;
    }
  }
  if (!ms.cfg.krp_enabled || out.fallback) region = subsample_scene(c.sample.scene, ms.cfg.region_points, rng);
  out.conditions = encode_conditions(ms.store, ms.mae, c.sample.history, region, probe);
  return out;
}

inline MotionSequence decode_prediction(const ModelSet& ms, const PreparedInput& in, const Eigen::VectorXd& z,
                                        double fps) {
  VaeInference<Real> vae{ms.store, ms.vae};
  MotionSequence m = vae.decode(z, fps);
  translate(m, in.offset);
  return m;
}

inline Eigen::VectorXd sample_prediction_latent(const ModelSet& ms, const PreparedInput& in, RngHandle rng) {
  LatentDiffusion<Real> diffusion{ms.store, ms.mcf, ms.denoiser, ms.schedule};
  return sample_latent(diffusion, in.conditions, rng, sampler_kind(ms.cfg.schedule));
}

struct PredictInfo {
  bool fallback = false;
  std::optional<KeyRegionBox> box;  // world coordinates
};

/// n_samples futures for one history; draw i uses stream i of `seed`.
inline std::vector<MotionSequence> predict(const ModelSet& ms, const MotionSequence& history, const ScenePointCloud& scene,
                                           int n_samples, std::uint64_t seed, PredictInfo* info = nullptr) {
  if (n_samples < 1) throw Error(ErrorCode::kBadConfig, "predict: n_samples must be >= 1");
  const PreparedInput in = prepare_input(ms, history, scene, RngHandle(seed, 0x9e0));
  if (info) {
    info->fallback = in.fallback;
    info->box = in.box;
    if (info->box) info->box->origin += in.offset;
  }
  std::vector<MotionSequence> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i)
    out.push_back(decode_prediction(ms, in, sample_prediction_latent(ms, in, RngHandle(seed, static_cast<std::uint64_t>(i))),
                                    history.fps));
  return out;
}

/// Runs n_runs independent passes over the test set and aggregates them.
/// Region sampling and conditions are fixed per sample; passes differ in the
/// initial latent draw.
inline EvalReport evaluate(const ModelSet& ms, const std::vector<Sample>& test, int n_runs, std::uint64_t seed,
                           DistanceNorm norm = DistanceNorm::kL2, std::ostream* log = nullptr) {
  if (n_runs < 2)
    throw Error(ErrorCode::kInsufficientRuns, "need at least 2 runs for a confidence interval, got " + std::to_string(n_runs));
  if (test.empty()) throw Error(ErrorCode::kBadConfig, "evaluate: empty test set");
  detail::check_shapes(ms.cfg, test);
  std::vector<PreparedInput> inputs;
  std::vector<MotionSequence> gts;
  int fallbacks = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    inputs.push_back(prepare_input(ms, test[i].history, test[i].scene, RngHandle(seed, 0x9e0).derive(i)));
    fallbacks += inputs.back().fallback ? 1 : 0;
    gts.push_back(test[i].future);
  }
  if (log && fallbacks) *log << "evaluate: " << fallbacks << " samples fell back to whole-scene sampling\n";
  std::vector<EvalReport> runs;
  for (int r = 0; r < n_runs; ++r) {
    std::vector<MotionSequence> preds;
    for (std::size_t i = 0; i < test.size(); ++i) {
      RngHandle rng = RngHandle(seed, 0xe7a1).derive(static_cast<std::uint64_t>(r)).derive(i);
      preds.push_back(decode_prediction(ms, inputs[i], sample_prediction_latent(ms, inputs[i], rng), test[i].future.fps));
    }
    runs.push_back(evaluate_predictions(preds, gts, ms.skeleton.root_index, norm));
    if (log) *log << "evaluate: run " << r + 1 << "/" << n_runs << " ade " << runs.back().ade << " mm\n";
  }
  return aggregate_runs(runs);
}

/// Synthetic train/test split described by the data section of a config.
inline DatasetSpec dataset_spec(const RunConfig& cfg, int count, std::uint64_t seed) {
  DatasetSpec d;
  d.count = count;
  d.seed = seed;
  d.history_frames = cfg.data.history_frames;
  d.future_frames = cfg.data.future_frames;
  d.fps = cfg.data.fps;
  d.room_min = cfg.data.room_min;
  d.room_max = cfg.data.room_max;
  d.obstacles_min = cfg.data.obstacles_min;
  d.obstacles_max = cfg.data.obstacles_max;
  d.points_per_m2 = cfg.data.points_per_m2;
  return d;
}

}  // namespace mcld
