#pragma once

// Conditional latent diffusion: noise schedule, forward noising, the
// multi-condition fusion block, the transformer noise predictor and the
// reverse sampler.
//
// Diffusion steps k run 1..K. Step embeddings are indexed by k - 1 so their
// argument lies in [0, K).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/error.hpp"
#include "mcld/mae.hpp"
#include "mcld/nn.hpp"
#include "mcld/rng.hpp"

namespace mcld {

struct DiffusionSchedule {
  int steps = 0;               // K
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> alpha;      // alpha[k - 1] = alpha_k
  std::vector<double> alpha_bar;  // alpha_bar[k - 1] = prod_{i <= k} alpha_i

  double alpha_at(int k) const { return alpha.at(static_cast<std::size_t>(k - 1)); }
  double alpha_bar_at(int k) const { return k == 0 ? 1.0 : alpha_bar.at(static_cast<std::size_t>(k - 1)); }
  double beta_at(int k) const { return 1.0 - alpha_at(k); }
};

inline constexpr double kTerminalAlphaBar = 1e-3;

/// Linear beta schedule; alpha_k = 1 - beta_k.
inline DiffusionSchedule build_schedule(int steps, double beta_start = 1e-4, double beta_end = 2e-2) {
  if (steps < 1) throw Error(ErrorCode::kBadSchedule, "schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_start < beta_end) || !(beta_end < 1.0))
    throw Error(ErrorCode::kBadSchedule, "need 0 < beta_start < beta_end < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double t = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double beta = beta_start + t * (beta_end - beta_start);
    s.alpha[i] = 1.0 - beta;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  if (!(s.alpha_bar.back() < kTerminalAlphaBar))
    throw Error(ErrorCode::kBadSchedule, "terminal alpha_bar " + std::to_string(s.alpha_bar.back()) + " is not below 1e-3");
  return s;
}

/// Short schedule with both beta endpoints scaled by 1000 / K, which keeps
/// the terminal alpha_bar near-Gaussian at small K.
inline DiffusionSchedule build_scaled_schedule(int steps, double beta_start = 1e-4, double beta_end = 2e-2) {
  const double scale = 1000.0 / static_cast<double>(steps);
  return build_schedule(steps, beta_start * scale, std::min(beta_end * scale, 0.999));
}

/// z_k = sqrt(alpha_k) z_{k-1} + sqrt(1 - alpha_k) eps
inline Eigen::VectorXd forward_noise_step(const Eigen::VectorXd& z_prev, double alpha_k, const Eigen::VectorXd& eps) {
  require_shape(z_prev.size() == eps.size(), "forward_noise_step: size mismatch");
  return std::sqrt(alpha_k) * z_prev + std::sqrt(1.0 - alpha_k) * eps;
}

inline Eigen::VectorXd forward_noise_step(const Eigen::VectorXd& z_prev, int k, const Eigen::VectorXd& eps,
                                          const DiffusionSchedule& s) {
  return forward_noise_step(z_prev, s.alpha_at(k), eps);
}

/// z_k = sqrt(alpha_bar_k) z_0 + sqrt(1 - alpha_bar_k) eps
inline Eigen::VectorXd forward_noise_jump(const Eigen::VectorXd& z0, int k, const Eigen::VectorXd& eps,
                                          const DiffusionSchedule& s) {
  require_shape(z0.size() == eps.size(), "forward_noise_jump: size mismatch");
  const double ab = s.alpha_bar_at(k);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

/// z_{k-1} = z_k / sqrt(alpha_k) - sqrt(1 / alpha_k - 1) eps_hat
inline Eigen::VectorXd denoise_step(const Eigen::VectorXd& z_k, const Eigen::VectorXd& eps_hat, double alpha_k) {
  require_shape(z_k.size() == eps_hat.size(), "denoise_step: size mismatch");
  return z_k / std::sqrt(alpha_k) - std::sqrt(1.0 / alpha_k - 1.0) * eps_hat;
}

/// Ancestral DDPM step with posterior variance; `noise` is ignored at k = 1.
inline Eigen::VectorXd ancestral_step(const Eigen::VectorXd& z_k, const Eigen::VectorXd& eps_hat, int k,
                                      const DiffusionSchedule& s, const Eigen::VectorXd& noise) {
  const double a = s.alpha_at(k);
  const double ab = s.alpha_bar_at(k);
  const double ab_prev = s.alpha_bar_at(k - 1);
  const double beta = 1.0 - a;
  Eigen::VectorXd mean = (z_k - beta / std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(a);
  if (k == 1) return mean;
  const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
  return mean + std::sqrt(var) * noise;
}

// ---------------------------------------------------------------------------
// Multi-condition fusion

enum class FusionMode {
  kMcf,        // step embedding + per-branch channel attention + concatenation
  kMcfNoStep,  // channel attention without the step embedding
  kConcat,     // plain concatenation
  kAdd,        // element-wise sum
};

struct ConditionMask {
  bool body = true;
  bool scene = true;
  bool interaction = true;
};

struct FusionConfig {
  FusionMode mode = FusionMode::kMcf;
  ConditionMask use;
  int hidden = 0;  // channel-attention hidden width; 0 means C_e

  int output_dim(int latent_dim) const { return mode == FusionMode::kAdd ? latent_dim : 3 * latent_dim; }
};

struct ChannelAttentionParams {
  LinearParams theta1;
  LinearParams theta2;
};

template <typename T>
struct McfModel {
  FusionConfig cfg;
  int latent_dim = 0;
  LinearParams step;  // theta(k); unused unless mode == kMcf
  ChannelAttentionParams body, scene, interaction;
};

template <typename T>
McfModel<T> make_mcf(ParamStore<T>& store, const FusionConfig& cfg, int latent_dim, RngHandle rng,
                     const std::string& prefix = "mcf") {
  McfModel<T> m;
  m.cfg = cfg;
  m.latent_dim = latent_dim;
  const int hidden = cfg.hidden > 0 ? cfg.hidden : latent_dim;
  if (cfg.mode == FusionMode::kMcf) m.step = make_linear(store, prefix + ".step", latent_dim, latent_dim, rng);
  if (cfg.mode == FusionMode::kMcf || cfg.mode == FusionMode::kMcfNoStep) {
    auto branch = [&](const std::string& name) {
      return ChannelAttentionParams{make_linear(store, prefix + "." + name + ".theta1", latent_dim, hidden, rng),
                                    make_linear(store, prefix + "." + name + ".theta2", hidden, latent_dim, rng)};
    };
    m.body = branch("body");
    m.scene = branch("scene");
    m.interaction = branch("interaction");
  }
  return m;
}

/// Sinusoidal encoding of the step index through one linear layer.
template <typename T>
Var<T> step_embed(const Net<T>& net, const LinearParams& p, int step_index) {
  return linear(net, p, net.constant(sinusoidal_row<T>(step_index, p.in)));
}

template <typename T>
struct ChannelAttention {
  Var<T> output;   // E_hat = E_tilde (.) w
  Var<T> weights;  // softmax over channels
};

/// w = softmax(theta2(relu(theta1(e)))), output = e (.) w.
template <typename T>
ChannelAttention<T> condition_attention(const Net<T>& net, const ChannelAttentionParams& p, Var<T> e) {
  Var<T> w = ag::softmax_rows(linear(net, p.theta2, ag::relu(linear(net, p.theta1, e))));
  return {ag::mul(e, w), w};
}

/// [B, S, I] along channels.
template <typename T>
Var<T> fuse_conditions(Var<T> body, Var<T> scene, Var<T> interaction) {
  require_shape(body.cols() == scene.cols() && scene.cols() == interaction.cols(), "fuse_conditions: dims differ");
  return ag::concat_cols<T>({body, scene, interaction});
}

template <typename T>
struct FusedCondition {
  Var<T> joint;  // E_C^k
  std::vector<Var<T>> channel_weights;
};

/// E_C^k for diffusion step k in [1, K]. Disabled conditions are zeroed
/// before fusion.
template <typename T>
FusedCondition<T> fuse_step(const Net<T>& net, const McfModel<T>& m, const ConditionVars<T>& c, int k) {
  const ConditionMask& use = m.cfg.use;
  auto gate = [&](Var<T> v, bool on) { return on ? v : net.constant(Mat<T>::Zero(1, v.cols())); };
  Var<T> eb = gate(c.body, use.body);
  Var<T> es = gate(c.scene, use.scene);
  Var<T> ei = gate(c.interaction, use.interaction);
  FusedCondition<T> out;
  switch (m.cfg.mode) {
    case FusionMode::kAdd:
      out.joint = ag::add(ag::add(eb, es), ei);
      return out;
    case FusionMode::kConcat:
      out.joint = fuse_conditions(eb, es, ei);
      return out;
    case FusionMode::kMcf:
    case FusionMode::kMcfNoStep:
      break;
  }
  if (m.cfg.mode == FusionMode::kMcf) {
    Var<T> theta = step_embed(net, m.step, k - 1);
    eb = ag::add(eb, theta);
    es = ag::add(es, theta);
    ei = ag::add(ei, theta);
  }
  ChannelAttention<T> b = condition_attention(net, m.body, eb);
  ChannelAttention<T> s = condition_attention(net, m.scene, es);
  ChannelAttention<T> i = condition_attention(net, m.interaction, ei);
  out.channel_weights = {b.weights, s.weights, i.weights};
  out.joint = fuse_conditions(gate(b.output, use.body), gate(s.output, use.scene), gate(i.output, use.interaction));
  return out;
}

// ---------------------------------------------------------------------------
// Noise predictor

struct DenoiserConfig {
  int layers = 9;
  int heads = 4;
  int width = 256;
  int ff_width = 512;

  void validate() const {
    if (layers <= 0 || heads <= 0 || width <= 0 || ff_width <= 0)
      throw Error(ErrorCode::kBadConfig, "denoiser: sizes must be positive");
    if (width % heads != 0) throw Error(ErrorCode::kBadConfig, "denoiser: width must be divisible by heads");
  }
};

template <typename T>
struct DenoiserModel {
  DenoiserConfig cfg;
  int latent_dim = 0;
  int condition_dim = 0;
  LinearParams latent_in;
  LinearParams condition_in;
  LinearParams step;
  std::vector<TransformerLayerParams> layers;
  LinearParams out;
};

template <typename T>
DenoiserModel<T> make_denoiser(ParamStore<T>& store, const DenoiserConfig& cfg, int latent_dim, int condition_dim,
                               RngHandle rng, const std::string& prefix = "den") {
  cfg.validate();
  DenoiserModel<T> m;
  m.cfg = cfg;
  m.latent_dim = latent_dim;
  m.condition_dim = condition_dim;
  m.latent_in = make_linear(store, prefix + ".latent_in", latent_dim, cfg.width, rng);
  m.condition_in = make_linear(store, prefix + ".condition_in", condition_dim, cfg.width, rng);
  m.step = make_linear(store, prefix + ".step", cfg.width, cfg.width, rng);
  m.layers = make_stack(store, prefix, cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.out = make_linear(store, prefix + ".out", cfg.width, latent_dim, rng);
  return m;
}

/// Two-token transformer over [proj(z_k), proj(E_C)] with the step
/// embedding added to both tokens; the first token's output is eps_hat.
template <typename T>
Var<T> predict_noise(const Net<T>& net, const DenoiserModel<T>& m, Var<T> z_k, Var<T> joint_condition, int k) {
  require_shape(z_k.rows() == 1 && z_k.cols() == m.latent_dim, "predict_noise: latent shape");
  require_shape(joint_condition.rows() == 1 && joint_condition.cols() == m.condition_dim, "predict_noise: condition shape");
  Var<T> step = step_embed(net, m.step, k - 1);
  Var<T> tokens = ag::concat_rows<T>({ag::add(linear(net, m.latent_in, z_k), step),
                                      ag::add(linear(net, m.condition_in, joint_condition), step)});
  tokens = self_attention_stack(net, m.layers, tokens);
  return linear(net, m.out, ag::slice_rows(tokens, 0, 1));
}

/// ||eps - eps_hat||^2 for one sample.
template <typename T>
Var<T> noise_prediction_loss(Var<T> eps, Var<T> eps_hat) {
  return ag::sum(ag::square(ag::sub(eps, eps_hat)));
}

template <typename T>
struct LatentDiffusion {
  const ParamStore<T>& params;
  const McfModel<T>& fusion;
  const DenoiserModel<T>& denoiser;
  const DiffusionSchedule& schedule;

  Eigen::VectorXd predict(const ConditionBundle& c, const Eigen::VectorXd& z_k, int k) const {
    Tape<T> tape(false);
    Net<T> net{tape, params};
    ConditionVars<T> vars{tape.constant(c.body.transpose().template cast<T>()),
                          tape.constant(c.scene.transpose().template cast<T>()),
                          tape.constant(c.interaction.transpose().template cast<T>())};
    FusedCondition<T> fused = fuse_step(net, fusion, vars, k);
    Var<T> eps = predict_noise(net, denoiser, tape.constant(z_k.transpose().template cast<T>()), fused.joint, k);
    return eps.value().row(0).transpose().template cast<double>();
  }
};

enum class SamplerKind { kLiteral, kAncestral };

/// Draws z_K ~ N(0, I) and runs k = K..1. The literal sampler is
/// deterministic after the initial draw.
template <typename T>
Eigen::VectorXd sample_latent(const LatentDiffusion<T>& model, const ConditionBundle& c, RngHandle& rng,
                              SamplerKind kind = SamplerKind::kLiteral) {
  const int dim = model.denoiser.latent_dim;
  Eigen::VectorXd z(dim);
  for (int i = 0; i < dim; ++i) z[i] = rng.normal();
  for (int k = model.schedule.steps; k >= 1; --k) {
    const Eigen::VectorXd eps_hat = model.predict(c, z, k);
    if (kind == SamplerKind::kLiteral) {
      z = denoise_step(z, eps_hat, model.schedule.alpha_at(k));
    } else {
      Eigen::VectorXd noise(dim);
      for (int i = 0; i < dim; ++i) noise[i] = rng.normal();
      z = ancestral_step(z, eps_hat, k, model.schedule, noise);
    }
  }
  return z;
}

}  // namespace mcld
