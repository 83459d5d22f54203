#pragma once

// Multi-attention encoder. Three branches share one layer count:
//   scene       self-attention over region points (no positions) -> E_S
//   body        self-attention over history frames (+ positions) -> E_B
//   interaction body tokens query the scene tokens of the same depth -> E_I
// Each branch is mean-pooled and projected to C_e.

#include <Eigen/Core>

#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/domain.hpp"
#include "mcld/error.hpp"
#include "mcld/nn.hpp"
#include "mcld/rng.hpp"

namespace mcld {

struct MaeConfig {
  int layers = 6;
  int heads = 4;
  int width = 128;
  int ff_width = 256;
  int latent_dim = 512;

  void validate() const {
    if (layers <= 0 || heads <= 0 || width <= 0 || ff_width <= 0 || latent_dim <= 0)
      throw Error(ErrorCode::kBadConfig, "mae: sizes must be positive");
    if (width % heads != 0) throw Error(ErrorCode::kBadConfig, "mae: width must be divisible by heads");
  }
};

/// E_B, E_S, E_I as plain vectors.
struct ConditionBundle {
  Eigen::VectorXd body;
  Eigen::VectorXd scene;
  Eigen::VectorXd interaction;
};

template <typename T>
struct ConditionVars {
  Var<T> body;         // 1 x C_e
  Var<T> scene;        // 1 x C_e
  Var<T> interaction;  // 1 x C_e
};

template <typename T>
struct MaeModel {
  MaeConfig cfg;
  int frames = 0;
  int joints = 0;
  LinearParams scene_embed;
  LinearParams body_embed;
  std::vector<TransformerLayerParams> scene_layers;
  std::vector<TransformerLayerParams> body_layers;
  std::vector<TransformerLayerParams> cross_layers;
  LinearParams scene_out;
  LinearParams body_out;
  LinearParams interaction_out;
};

template <typename T>
MaeModel<T> make_mae(ParamStore<T>& store, const MaeConfig& cfg, int frames, int joints, RngHandle rng,
                     const std::string& prefix = "mae") {
  cfg.validate();
  MaeModel<T> m;
  m.cfg = cfg;
  m.frames = frames;
  m.joints = joints;
  m.scene_embed = make_linear(store, prefix + ".scene_embed", 3, cfg.width, rng);
  m.body_embed = make_linear(store, prefix + ".body_embed", 3 * joints, cfg.width, rng);
  m.scene_layers = make_stack(store, prefix + ".scene", cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.body_layers = make_stack(store, prefix + ".body", cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.cross_layers = make_stack(store, prefix + ".cross", cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.scene_out = make_linear(store, prefix + ".scene_out", cfg.width, cfg.latent_dim, rng);
  m.body_out = make_linear(store, prefix + ".body_out", cfg.width, cfg.latent_dim, rng);
  m.interaction_out = make_linear(store, prefix + ".interaction_out", cfg.width, cfg.latent_dim, rng);
  return m;
}

/// `history` is T x 3N_b, `region` is N_s' x 3.
template <typename T>
ConditionVars<T> encode_conditions(const Net<T>& net, const MaeModel<T>& m, Var<T> history, Var<T> region) {
  require_shape(history.rows() == m.frames && history.cols() == 3 * m.joints,
                "encode_conditions: history shape does not match the model");
  require_shape(region.cols() == 3 && region.rows() >= 1, "encode_conditions: region must be N x 3");

  Var<T> scene = linear(net, m.scene_embed, region);
  Var<T> body0 = ag::add(linear(net, m.body_embed, history), net.constant(sinusoidal_table<T>(m.frames, m.cfg.width)));
  Var<T> body = body0;
  Var<T> inter = body0;
  for (int l = 0; l < m.cfg.layers; ++l) {
    scene = transformer_layer(net, m.scene_layers[l], scene, scene);
    body = transformer_layer(net, m.body_layers[l], body, body);
    inter = transformer_layer(net, m.cross_layers[l], inter, scene);
  }
  ConditionVars<T> out;
  out.body = linear(net, m.body_out, ag::mean_rows(body));
  out.scene = linear(net, m.scene_out, ag::mean_rows(scene));
  out.interaction = linear(net, m.interaction_out, ag::mean_rows(inter));
  return out;
}

template <typename T>
ConditionBundle to_bundle(const ConditionVars<T>& v) {
  return {v.body.value().row(0).transpose().template cast<double>(),
          v.scene.value().row(0).transpose().template cast<double>(),
          v.interaction.value().row(0).transpose().template cast<double>()};
}

template <typename T>
ConditionBundle encode_conditions(const ParamStore<T>& params, const MaeModel<T>& m, const MotionSequence& history,
                                  const ScenePointCloud& region, AttentionProbe* probe = nullptr) {
  Tape<T> tape(false);
  Net<T> net{tape, params, probe};
  return to_bundle(encode_conditions(net, m, tape.constant(history.frames.cast<T>()),
                                     tape.constant(region.points.cast<T>())));
}

}  // namespace mcld
