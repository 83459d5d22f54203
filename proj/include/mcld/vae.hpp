#pragma once

// Transformer VAE over future motion. The encoder reads two learned
// distribution tokens followed by one token per frame and returns the
// Gaussian parameters of a single latent vector; the decoder projects that
// vector to one memory token per frame and refines learned per-frame
// queries against them.

#include <cmath>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/domain.hpp"
#include "mcld/error.hpp"
#include "mcld/nn.hpp"
#include "mcld/rng.hpp"

namespace mcld {

struct VaeConfig {
  int layers = 6;
  int heads = 4;
  int width = 256;
  int latent_dim = 512;
  int ff_width = 512;
  double lambda_mr = 1.0;
  double lambda_kl = 1e-4;

  void validate() const {
    if (layers <= 0 || heads <= 0 || width <= 0 || latent_dim <= 0 || ff_width <= 0)
      throw Error(ErrorCode::kBadConfig, "vae: sizes must be positive");
    if (width % heads != 0) throw Error(ErrorCode::kBadConfig, "vae: width must be divisible by heads");
    if (!(lambda_mr > 0) || !(lambda_kl > 0)) throw Error(ErrorCode::kBadConfig, "vae: loss weights must be positive");
  }
};

/// log(1e-6): floor on the log standard deviation.
inline constexpr double kMinLogSigma = -13.815510557964274;

/// Starting posterior scale, sigma = e^-3.
inline constexpr double kInitLogSigma = -3.0;

template <typename T>
struct VaeModel {
  VaeConfig cfg;
  int frames = 0;
  int joints = 0;
  // encoder
  LinearParams frame_embed;
  int dist_tokens = -1;
  std::vector<TransformerLayerParams> encoder;
  LinearParams mu_head;
  LinearParams mu_skip;  // flattened motion straight to mu
  LinearParams log_sigma_head;
  // decoder
  int queries = -1;
  LinearParams latent_embed;
  std::vector<TransformerLayerParams> decoder;
  LinearParams pose_head;
  LinearParams pose_skip;  // z straight to all frames
};

template <typename T>
VaeModel<T> make_vae(ParamStore<T>& store, const VaeConfig& cfg, int frames, int joints, RngHandle rng,
                     const std::string& prefix = "vae") {
  cfg.validate();
  VaeModel<T> m;
  m.cfg = cfg;
  m.frames = frames;
  m.joints = joints;
  m.frame_embed = make_linear(store, prefix + ".enc.frame_embed", 3 * joints, cfg.width, rng);
  m.dist_tokens = store.add(prefix + ".enc.dist_tokens", init_normal<T>(2, cfg.width, 1.0, rng));
  m.encoder = make_stack(store, prefix + ".enc", cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.mu_head = make_linear(store, prefix + ".enc.mu", cfg.width, cfg.latent_dim, rng);
  m.mu_skip = make_linear(store, prefix + ".enc.mu_skip", frames * 3 * joints, cfg.latent_dim, rng);
  m.log_sigma_head = make_linear(store, prefix + ".enc.log_sigma", cfg.width, cfg.latent_dim, rng);
  store.value(m.log_sigma_head.bias).setConstant(static_cast<T>(kInitLogSigma));
  m.queries = store.add(prefix + ".dec.queries", init_normal<T>(frames, cfg.width, 1.0, rng));
  m.latent_embed = make_linear(store, prefix + ".dec.latent_embed", cfg.latent_dim, frames * cfg.width, rng);
  m.decoder = make_stack(store, prefix + ".dec", cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.pose_head = make_linear(store, prefix + ".dec.pose", cfg.width, 3 * joints, rng);
  m.pose_skip = make_linear(store, prefix + ".dec.pose_skip", cfg.latent_dim, frames * 3 * joints, rng);
  // The transformer heads start at zero; the skip paths carry the initial map.
  store.value(m.mu_head.weight).setZero();
  store.value(m.pose_head.weight).setZero();
  return m;
}

template <typename T>
struct GaussianParams {
  Var<T> mu;         // 1 x C_e
  Var<T> log_sigma;  // 1 x C_e, already floored
  Var<T> sigma;      // exp(log_sigma)
};

template <typename T>
GaussianParams<T> vae_encode(const Net<T>& net, const VaeModel<T>& m, Var<T> motion) {
  require_shape(motion.rows() == m.frames && motion.cols() == 3 * m.joints,
                "vae encode: expected " + std::to_string(m.frames) + " x " + std::to_string(3 * m.joints) + " motion");
  Var<T> frames = ag::add(linear(net, m.frame_embed, motion),
                          net.constant(sinusoidal_table<T>(m.frames, m.cfg.width)));
  Var<T> tokens = ag::concat_rows<T>({net.p(m.dist_tokens), frames});
  tokens = self_attention_stack(net, m.encoder, tokens);
  GaussianParams<T> g;
  std::vector<Var<T>> rows;
  rows.reserve(static_cast<std::size_t>(m.frames));
  for (int f = 0; f < m.frames; ++f) rows.push_back(ag::slice_rows(motion, f, 1));
  g.mu = ag::add(linear(net, m.mu_head, ag::slice_rows(tokens, 0, 1)), linear(net, m.mu_skip, ag::concat_cols<T>(rows)));
  g.log_sigma = ag::clamp_min(linear(net, m.log_sigma_head, ag::slice_rows(tokens, 1, 1)), T(kMinLogSigma));
  g.sigma = ag::exp(g.log_sigma);
  return g;
}

/// z = mu + max(sigma, 1e-6) * eps.
template <typename T>
Var<T> reparameterize(Var<T> mu, Var<T> sigma, Var<T> eps) {
  return ag::add(mu, ag::mul(ag::clamp_min(sigma, T(1e-6)), eps));
}

template <typename T>
Var<T> vae_decode(const Net<T>& net, const VaeModel<T>& m, Var<T> z) {
  require_shape(z.rows() == 1 && z.cols() == m.cfg.latent_dim,
                "vae decode: latent must be 1 x " + std::to_string(m.cfg.latent_dim));
  // One memory token per frame, cut from a single projection of z.
  Var<T> flat = linear(net, m.latent_embed, z);
  std::vector<Var<T>> rows;
  rows.reserve(static_cast<std::size_t>(m.frames));
  for (int f = 0; f < m.frames; ++f) rows.push_back(ag::slice_cols(flat, f * m.cfg.width, m.cfg.width));
  Var<T> memory = ag::concat_rows<T>(rows);
  Var<T> x = ag::add(net.p(m.queries), memory);
  for (const auto& layer : m.decoder) x = transformer_layer(net, layer, x, memory);
  Var<T> skip = linear(net, m.pose_skip, z);
  std::vector<Var<T>> skip_rows;
  skip_rows.reserve(static_cast<std::size_t>(m.frames));
  for (int f = 0; f < m.frames; ++f) skip_rows.push_back(ag::slice_cols(skip, f * 3 * m.joints, 3 * m.joints));
  return ag::add(linear(net, m.pose_head, x), ag::concat_rows<T>(skip_rows));
}

template <typename T>
struct VaeLoss {
  Var<T> total;
  Var<T> l_mr;
  Var<T> l_kl;
};

/// total = lambda_mr * mean per-joint L2 distance + lambda_kl * KL(N(mu, sigma^2) || N(0, I)).
template <typename T>
VaeLoss<T> vae_loss(Var<T> target, Var<T> recon, Var<T> mu, Var<T> log_sigma, const VaeConfig& cfg) {
  require_shape(target.rows() == recon.rows() && target.cols() == recon.cols(), "vae_loss: motion shapes differ");
  require_shape(mu.cols() == log_sigma.cols(), "vae_loss: mu/sigma shapes differ");
  VaeLoss<T> out;
  out.l_mr = ag::mean(ag::group_norms(ag::sub(target, recon), 3));
  // 0.5 * (mu^2 + sigma^2 - 1 - ln sigma^2) with sigma^2 = exp(2 log_sigma).
  Var<T> two_log = ag::scale(log_sigma, T(2));
  Var<T> per_dim = ag::sub(ag::add(ag::square(mu), ag::exp(two_log)), two_log);
  out.l_kl = ag::scale(ag::sub(ag::sum(per_dim), mu.tape->constant(Mat<T>::Constant(1, 1, T(mu.cols())))), T(0.5));
  out.total = ag::add(ag::scale(out.l_mr, static_cast<T>(cfg.lambda_mr)), ag::scale(out.l_kl, static_cast<T>(cfg.lambda_kl)));
  if (!std::isfinite(static_cast<double>(out.total.scalar())))
    throw Error(ErrorCode::kNonFiniteLoss, "vae loss is not finite");
  return out;
}

struct VaeLossValues {
  double total = 0.0;
  double l_mr = 0.0;
  double l_kl = 0.0;
};

/// Direct evaluation of the loss on plain values.
inline VaeLossValues vae_loss_values(const RowMatrixXd& target, const RowMatrixXd& recon, const Eigen::VectorXd& mu,
                                     const Eigen::VectorXd& sigma, const VaeConfig& cfg) {
  require_shape(target.rows() == recon.rows() && target.cols() == recon.cols(), "vae_loss: motion shapes differ");
  require_shape(mu.size() == sigma.size(), "vae_loss: mu/sigma shapes differ");
  VaeLossValues v;
  const int joints = static_cast<int>(target.cols() / 3);
  for (Eigen::Index f = 0; f < target.rows(); ++f)
    for (int j = 0; j < joints; ++j) v.l_mr += (target.row(f).segment(3 * j, 3) - recon.row(f).segment(3 * j, 3)).norm();
  v.l_mr /= static_cast<double>(target.rows() * joints);
  for (Eigen::Index c = 0; c < mu.size(); ++c) {
    const double s2 = sigma[c] * sigma[c];
    v.l_kl += 0.5 * (mu[c] * mu[c] + s2 - 1.0 - std::log(s2));
  }
  v.total = cfg.lambda_mr * v.l_mr + cfg.lambda_kl * v.l_kl;
  if (!std::isfinite(v.total)) throw Error(ErrorCode::kNonFiniteLoss, "vae loss is not finite");
  return v;
}

/// Inference helpers on plain values.
template <typename T>
struct VaeInference {
  const ParamStore<T>& params;
  const VaeModel<T>& model;

  std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const MotionSequence& future) const {
    Tape<T> tape(false);
    Net<T> net{tape, params};
    GaussianParams<T> g = vae_encode(net, model, tape.constant(to_model<T>(future.frames)));
    return {g.mu.value().row(0).transpose().template cast<double>(),
            g.sigma.value().row(0).transpose().template cast<double>()};
  }

  MotionSequence decode(const Eigen::VectorXd& z, double fps) const {
    Tape<T> tape(false);
    Net<T> net{tape, params};
    Mat<T> zm = z.transpose().template cast<T>();
    Var<T> out = vae_decode(net, model, tape.constant(zm));
    MotionSequence m;
    m.frames = out.value().template cast<double>();
    m.fps = fps;
    return m;
  }
};

}  // namespace mcld
