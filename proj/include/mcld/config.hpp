#pragma once

// Run configuration. On disk it is one flat JSON object whose keys mirror the
// field names ("vae.layers", "optimizer.lr", ...). Keys not present keep the
// profile default; unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcld/diffusion.hpp"
#include "mcld/error.hpp"
#include "mcld/krp.hpp"
#include "mcld/mae.hpp"
#include "mcld/optim.hpp"
#include "mcld/vae.hpp"

namespace mcld {

struct DataConfig {
  int history_frames = 5;
  int future_frames = 10;
  double fps = 5.0;
  int joint_count = 21;
  int train_count = 256;
  int test_count = 32;
  double room_min = 3.5;
  double room_max = 5.0;
  int obstacles_min = 1;
  int obstacles_max = 3;
  double points_per_m2 = 25.0;
};

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  bool scale_to_steps = false;  // multiply betas by 1000 / steps
  std::string sampler = "literal";
};

struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  DataConfig data;
  VaeConfig vae;
  KrpConfig krp;
  bool krp_enabled = true;
  double krp_lr_scale = 1.0;  // multiplier on optimizer.lr for KRP parameters
  int region_points = 6000;
  MaeConfig mae;
  FusionConfig fusion;
  DenoiserConfig denoiser;
  ScheduleConfig schedule;
  AdamWConfig optimizer;
  std::string lr_decay = "none";  // none | cosine
  int batch_size = 16;
  int stage1_epochs = 1000;
  int stage2_epochs = 4000;
  double clip_norm = 1.0;
  int checkpoint_every = 0;  // steps; 0 saves only at the end
  int eval_runs = 20;

  int latent_dim() const { return vae.latent_dim; }

  void validate() const;
};

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kMcf: return "mcf";
    case FusionMode::kMcfNoStep: return "mcf_no_step";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kAdd: return "add";
  }
  return "mcf";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "mcf") return FusionMode::kMcf;
  if (s == "mcf_no_step") return FusionMode::kMcfNoStep;
  if (s == "concat") return FusionMode::kConcat;
  if (s == "add") return FusionMode::kAdd;
  throw Error(ErrorCode::kBadConfig, "fusion.mode must be one of mcf, mcf_no_step, concat, add (got '" + s + "')");
}

namespace detail {

using ConfigValue = std::variant<int*, double*, bool*, std::string*, std::uint64_t*>;

struct ConfigField {
  std::string key;
  ConfigValue target;
};

// Fusion mode is stored as an enum; the field table goes through a string
// shadow that is synchronized on read and write.
struct ConfigView {
  std::string fusion_mode;
  std::vector<ConfigField> fields;
};

inline ConfigView config_view(RunConfig& c) {
  ConfigView v;
  v.fusion_mode = to_string(c.fusion.mode);
  auto& f = v.fields;
  f = {
      {"profile", &c.profile},
      {"seed", &c.seed},
      {"data.history_frames", &c.data.history_frames},
      {"data.future_frames", &c.data.future_frames},
      {"data.fps", &c.data.fps},
      {"data.joint_count", &c.data.joint_count},
      {"data.train_count", &c.data.train_count},
      {"data.test_count", &c.data.test_count},
      {"data.room_min", &c.data.room_min},
      {"data.room_max", &c.data.room_max},
      {"data.obstacles_min", &c.data.obstacles_min},
      {"data.obstacles_max", &c.data.obstacles_max},
      {"data.points_per_m2", &c.data.points_per_m2},
      {"vae.layers", &c.vae.layers},
      {"vae.heads", &c.vae.heads},
      {"vae.width", &c.vae.width},
      {"vae.ff_width", &c.vae.ff_width},
      {"vae.latent_dim", &c.vae.latent_dim},
      {"vae.lambda_mr", &c.vae.lambda_mr},
      {"vae.lambda_kl", &c.vae.lambda_kl},
      {"krp.enabled", &c.krp_enabled},
      {"krp.layers", &c.krp.layers},
      {"krp.heads", &c.krp.heads},
      {"krp.width", &c.krp.width},
      {"krp.ff_width", &c.krp.ff_width},
      {"krp.hidden", &c.krp.hidden},
      {"krp.soft_tau", &c.krp.soft_tau},
      {"krp.min_dim", &c.krp.min_dim},
      {"krp.max_volume_ratio", &c.krp.max_volume_ratio},
      {"krp.region_points", &c.region_points},
      {"krp.lr_scale", &c.krp_lr_scale},
      {"mae.layers", &c.mae.layers},
      {"mae.heads", &c.mae.heads},
      {"mae.width", &c.mae.width},
      {"mae.ff_width", &c.mae.ff_width},
      {"fusion.use_body", &c.fusion.use.body},
      {"fusion.use_scene", &c.fusion.use.scene},
      {"fusion.use_interaction", &c.fusion.use.interaction},
      {"fusion.hidden", &c.fusion.hidden},
      {"denoiser.layers", &c.denoiser.layers},
      {"denoiser.heads", &c.denoiser.heads},
      {"denoiser.width", &c.denoiser.width},
      {"denoiser.ff_width", &c.denoiser.ff_width},
      {"schedule.steps", &c.schedule.steps},
      {"schedule.beta_start", &c.schedule.beta_start},
      {"schedule.beta_end", &c.schedule.beta_end},
      {"schedule.scale_to_steps", &c.schedule.scale_to_steps},
      {"schedule.sampler", &c.schedule.sampler},
      {"optimizer.lr", &c.optimizer.lr},
      {"optimizer.beta1", &c.optimizer.beta1},
      {"optimizer.beta2", &c.optimizer.beta2},
      {"optimizer.eps", &c.optimizer.eps},
      {"optimizer.weight_decay", &c.optimizer.weight_decay},
      {"optimizer.lr_decay", &c.lr_decay},
      {"train.batch_size", &c.batch_size},
      {"train.stage1_epochs", &c.stage1_epochs},
      {"train.stage2_epochs", &c.stage2_epochs},
      {"train.clip_norm", &c.clip_norm},
      {"train.checkpoint_every", &c.checkpoint_every},
      {"eval.runs", &c.eval_runs},
  };
  return v;
}

}  // namespace detail

/// Flat JSON echo; "optimizer.name" is fixed to adamw.
inline nlohmann::json to_flat_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  detail::ConfigView view = detail::config_view(copy);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : view.fields) std::visit([&](auto* p) { j[f.key] = *p; }, f.target);
  j["fusion.mode"] = view.fusion_mode;
  j["optimizer.name"] = "adamw";
  return j;
}

inline void apply_flat_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kBadConfig, "config must be a flat JSON object");
  detail::ConfigView view = detail::config_view(cfg);
  for (const auto& [key, value] : j.items()) {
    if (key == "optimizer.name") {
      if (value != "adamw") throw Error(ErrorCode::kBadConfig, "optimizer.name: only adamw is supported");
      continue;
    }
    if (key == "fusion.mode") {
      if (!value.is_string()) throw Error(ErrorCode::kBadConfig, "fusion.mode must be a string");
      cfg.fusion.mode = fusion_mode_from_string(value.get<std::string>());
      continue;
    }
    bool found = false;
    for (const auto& f : view.fields) {
      if (f.key != key) continue;
      found = true;
      std::visit(
          [&](auto* p) {
            using V = std::remove_pointer_t<decltype(p)>;
            bool ok = false;
            if constexpr (std::is_same_v<V, bool>) ok = value.is_boolean();
            else if constexpr (std::is_same_v<V, std::string>) ok = value.is_string();
            else if constexpr (std::is_same_v<V, double>) ok = value.is_number();
            else if constexpr (std::is_same_v<V, std::uint64_t>) ok = value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
            else ok = value.is_number_integer();
            if (!ok) throw Error(ErrorCode::kBadConfig, "config key '" + key + "' has the wrong type");
            *p = value.get<V>();
          },
          f.target);
    }
    if (!found) throw Error(ErrorCode::kBadConfig, "unknown config key '" + key + "'");
  }
}

/// Reduced sizes for CPU training in minutes.
inline RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.vae = {2, 4, 64, 32, 128, 1.0, 1e-4};
  c.krp.layers = 1;
  c.krp.heads = 2;
  c.krp.width = 32;
  c.krp.ff_width = 64;
  c.krp.hidden = 32;
  c.region_points = 64;
  c.mae = {1, 2, 32, 64, 32};
  c.fusion.hidden = 32;
  c.denoiser = {2, 4, 64, 128};
  c.schedule.steps = 50;
  c.schedule.scale_to_steps = true;
  c.optimizer.lr = 3e-3;
  c.lr_decay = "cosine";
  c.krp_lr_scale = 0.1;
  c.batch_size = 32;
  c.stage1_epochs = 250;
  c.stage2_epochs = 625;
  return c;
}

/// Sizes reported for the original model.
inline RunConfig paper_profile() {
  RunConfig c;
  c.profile = "paper";
  return c;
}

inline RunConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw Error(ErrorCode::kBadConfig, "profile must be desk or paper (got '" + name + "')");
}

inline void RunConfig::validate() const {
  vae.validate();
  krp.validate();
  MaeConfig m = mae;
  m.latent_dim = vae.latent_dim;
  m.validate();
  denoiser.validate();
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kBadConfig, std::string(what) + " must be positive");
  };
  positive(data.history_frames >= 1 && data.future_frames >= 1, "data frame counts");
  positive(data.fps > 0, "data.fps");
  positive(data.train_count >= 1 && data.test_count >= 1, "data sample counts");
  positive(region_points >= 1, "krp.region_points");
  positive(krp_lr_scale >= 0, "krp.lr_scale");
  positive(batch_size >= 1, "train.batch_size");
  positive(stage1_epochs >= 1 && stage2_epochs >= 1, "training epochs");
  positive(optimizer.lr > 0, "optimizer.lr");
  positive(eval_runs >= 1, "eval.runs");
  if (optimizer.weight_decay < 0) throw Error(ErrorCode::kBadConfig, "optimizer.weight_decay must be >= 0");
  if (lr_decay != "none" && lr_decay != "cosine")
    throw Error(ErrorCode::kBadConfig, "optimizer.lr_decay must be none or cosine");
  if (schedule.sampler != "literal" && schedule.sampler != "ancestral")
    throw Error(ErrorCode::kBadConfig, "schedule.sampler must be literal or ancestral");
  if (data.joint_count != 18 && data.joint_count != 21)
    throw Error(ErrorCode::kBadConfig, "data.joint_count: the synthetic body template has 18 or 21 joints");
  if (!fusion.use.body && !fusion.use.scene && !fusion.use.interaction)
    throw Error(ErrorCode::kBadConfig, "fusion: at least one condition must be enabled");
}

inline DiffusionSchedule make_schedule(const ScheduleConfig& s) {
  return s.scale_to_steps ? build_scaled_schedule(s.steps, s.beta_start, s.beta_end)
                          : build_schedule(s.steps, s.beta_start, s.beta_end);
}

inline SamplerKind sampler_kind(const ScheduleConfig& s) {
  return s.sampler == "ancestral" ? SamplerKind::kAncestral : SamplerKind::kLiteral;
}

/// Profile defaults overlaid with an optional config file. A "profile" key in
/// the file selects the base profile when `profile` is empty.
inline RunConfig load_config(const std::string& path, const std::string& profile) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open config '" + path + "'");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kBadConfig, std::string("config is not valid JSON: ") + e.what());
    }
  }
  std::string base = profile;
  if (base.empty()) base = j.is_object() && j.contains("profile") && j["profile"].is_string() ? j["profile"].get<std::string>() : "desk";
  RunConfig cfg = profile_by_name(base);
  apply_flat_json(cfg, j);
  cfg.profile = base;
  cfg.validate();
  return cfg;
}

}  // namespace mcld
