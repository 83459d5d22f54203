#include <gtest/gtest.h>

#include <cmath>

#include "grad_check.hpp"
#include "mcld/vae.hpp"

using namespace mcld;

namespace {

VaeConfig tiny_config() {
  VaeConfig c;
  c.layers = 1;
  c.heads = 2;
  c.width = 16;
  c.ff_width = 16;
  c.latent_dim = 8;
  return c;
}

struct TinyVae {
  ParamStore<double> store;
  VaeModel<double> model;

  TinyVae(int frames = 2, int joints = 3, VaeConfig cfg = tiny_config()) {
    model = make_vae(store, cfg, frames, joints, RngHandle(17));
  }
};

MotionSequence random_motion(int frames, int joints, std::uint64_t seed) {
  RngHandle rng(seed);
  MotionSequence m(frames, joints);
  for (Eigen::Index i = 0; i < m.frames.size(); ++i) m.frames.data()[i] = rng.uniform(-1, 1);
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(VaeEncode, ShapesAndPositiveSigma) {
  TinyVae v(10, 21);
  VaeInference<double> inf{v.store, v.model};
  const auto [mu, sigma] = inf.encode(random_motion(10, 21, 1));
  EXPECT_EQ(mu.size(), 8);
  EXPECT_EQ(sigma.size(), 8);
  EXPECT_TRUE((sigma.array() > 0).all());
  EXPECT_TRUE(mu.allFinite());
}

TEST(VaeEncode, Pure) {
  TinyVae v;
  VaeInference<double> inf{v.store, v.model};
  const MotionSequence m = random_motion(2, 3, 2);
  const auto a = inf.encode(m);
  const auto b = inf.encode(m);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(VaeEncode, FrameOrderMatters) {
  TinyVae v(4, 3);
  VaeInference<double> inf{v.store, v.model};
  const MotionSequence m = random_motion(4, 3, 3);
  MotionSequence r = m;
  r.frames = m.frames.colwise().reverse();
  const auto a = inf.encode(m);
  const auto b = inf.encode(r);
  EXPECT_GT((a.first - b.first).cwiseAbs().maxCoeff() + (a.second - b.second).cwiseAbs().maxCoeff(), 0.0);
}

TEST(VaeEncode, WrongShapeThrows) {
  TinyVae v;
  VaeInference<double> inf{v.store, v.model};
  try {
    inf.encode(random_motion(3, 3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Reparameterize, Identities) {
  Tape<double> tape(false);
  auto row = [&](Eigen::VectorXd v) { return tape.constant(v.transpose()); };
  const Eigen::VectorXd mu = vec({0.5, -1.0, 2.0});
  const Eigen::VectorXd sigma = vec({0.3, 1.0, 2.0});
  const Eigen::VectorXd e = vec({1.5, -0.2, 0.7});
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  EXPECT_EQ(Eigen::VectorXd(reparameterize(row(mu), row(sigma), row(zero)).value().row(0).transpose()), mu);
  EXPECT_EQ(Eigen::VectorXd(reparameterize(row(zero), row(Eigen::VectorXd::Ones(3)), row(e)).value().row(0).transpose()), e);
  const Eigen::VectorXd z = reparameterize(row(mu), row(zero), row(e)).value().row(0).transpose();
  EXPECT_LE((z - mu).cwiseAbs().maxCoeff(), 1e-6 * e.cwiseAbs().maxCoeff() + 1e-15);
  const Eigen::VectorXd full = reparameterize(row(mu), row(sigma), row(e)).value().row(0).transpose();
  EXPECT_EQ(full, Eigen::VectorXd(mu + sigma.cwiseProduct(e)));
}

TEST(VaeDecode, DeterministicAndShaped) {
  TinyVae v(10, 21);
  VaeInference<double> inf{v.store, v.model};
  const Eigen::VectorXd z = vec({0.1, -0.2, 0.3, 0.0, 1.0, -1.0, 0.5, 0.25});
  const MotionSequence a = inf.decode(z, 5.0);
  const MotionSequence b = inf.decode(z, 5.0);
  EXPECT_EQ(a.frame_count(), 10);
  EXPECT_EQ(a.joint_count(), 21);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.fps, 5.0);
}

TEST(VaeLoss, PerfectReconstructionAtPriorIsZero) {
  const RowMatrixXd m = random_motion(3, 4, 5).frames;
  const VaeLossValues l = vae_loss_values(m, m, Eigen::VectorXd::Zero(6), Eigen::VectorXd::Ones(6), VaeConfig{});
  EXPECT_EQ(l.total, 0.0);
  EXPECT_EQ(l.l_mr, 0.0);
  EXPECT_EQ(l.l_kl, 0.0);
}

TEST(VaeLoss, KlOfUnitShiftIsHalf) {
  // KL(N(1, 1) || N(0, 1)) = 0.5 * (1 + 1 - 1 - ln 1).
  const RowMatrixXd m = random_motion(2, 2, 6).frames;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(5);
  mu[2] = 1.0;
  EXPECT_EQ(vae_loss_values(m, m, mu, Eigen::VectorXd::Ones(5), VaeConfig{}).l_kl, 0.5);
  Tape<double> tape(false);
  VaeLoss<double> l = vae_loss(tape.constant(m), tape.constant(m), tape.constant(mu.transpose()),
                               tape.constant(Mat<double>::Zero(1, 5)), VaeConfig{});
  EXPECT_EQ(l.l_kl.scalar(), 0.5);
}

TEST(VaeLoss, KlWeightIsLinear) {
  const RowMatrixXd a = random_motion(2, 2, 7).frames;
  const RowMatrixXd b = random_motion(2, 2, 8).frames;
  const Eigen::VectorXd mu = vec({0.3, -0.7});
  const Eigen::VectorXd sigma = vec({0.5, 1.7});
  VaeConfig c1, c2;
  c2.lambda_kl = 2 * c1.lambda_kl;
  const VaeLossValues l1 = vae_loss_values(a, b, mu, sigma, c1);
  const VaeLossValues l2 = vae_loss_values(a, b, mu, sigma, c2);
  EXPECT_NEAR(l2.total - c2.lambda_mr * l2.l_mr, 2.0 * (l1.total - c1.lambda_mr * l1.l_mr), 1e-15);
  EXPECT_EQ(l2.l_kl, l1.l_kl);
}

TEST(VaeLoss, JointDistanceOracle) {
  // One joint of one frame off by (3, 4, 0): mean over 2 frames x 2 joints is 5 / 4.
  RowMatrixXd a = RowMatrixXd::Zero(2, 6);
  RowMatrixXd b = a;
  b(1, 3) = 3.0;
  b(1, 4) = 4.0;
  EXPECT_EQ(vae_loss_values(a, b, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), VaeConfig{}).l_mr, 1.25);
}

TEST(VaeLoss, TapeMatchesDirectValues) {
  const RowMatrixXd a = random_motion(3, 4, 9).frames;
  const RowMatrixXd b = random_motion(3, 4, 10).frames;
  const Eigen::VectorXd mu = vec({0.3, -0.7, 1.2});
  const Eigen::VectorXd ls = vec({-0.5, 0.2, 0.0});
  Tape<double> tape(false);
  VaeLoss<double> l = vae_loss(tape.constant(a), tape.constant(b), tape.constant(mu.transpose()),
                               tape.constant(ls.transpose()), VaeConfig{});
  const VaeLossValues v = vae_loss_values(a, b, mu, ls.array().exp().matrix(), VaeConfig{});
  EXPECT_NEAR(l.total.scalar(), v.total, 1e-12);
  EXPECT_NEAR(l.l_mr.scalar(), v.l_mr, 1e-12);
  EXPECT_NEAR(l.l_kl.scalar(), v.l_kl, 1e-12);
}

TEST(VaeLoss, NonFiniteThrows) {
  RowMatrixXd a = RowMatrixXd::Zero(1, 3);
  RowMatrixXd b = a;
  b(0, 0) = NAN;
  try {
    vae_loss_values(a, b, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), VaeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

TEST(VaeLoss, KlNonNegativeAndZeroOnlyAtPrior) {
  RngHandle rng(12);
  const RowMatrixXd m = RowMatrixXd::Zero(1, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXd mu(4), sigma(4);
    for (int i = 0; i < 4; ++i) {
      mu[i] = rng.uniform(-3, 3);
      sigma[i] = std::exp(rng.uniform(-4, 2));
    }
    ASSERT_GE(vae_loss_values(m, m, mu, sigma, VaeConfig{}).l_kl, 0.0);
  }
  EXPECT_LE(std::abs(vae_loss_values(m, m, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4), VaeConfig{}).l_kl), 1e-12);
  Eigen::VectorXd near = Eigen::VectorXd::Ones(4);
  near[1] = 1.001;
  EXPECT_GT(vae_loss_values(m, m, Eigen::VectorXd::Zero(4), near, VaeConfig{}).l_kl, 1e-12);
}

TEST(VaeGradient, TotalLossMatchesFiniteDifferencesOnEveryParameter) {
  // C_e = 8, width 16, one layer, two frames, three joints.
  TinyVae v(2, 3);
  const MotionSequence target = random_motion(2, 3, 20);
  RngHandle er(21);
  Mat<double> eps(1, 8);
  for (int i = 0; i < 8; ++i) eps(0, i) = er.normal();
  auto loss = [&](const Net<double>& net) {
    Var<double> motion = net.constant(target.frames);
    GaussianParams<double> g = vae_encode(net, v.model, motion);
    Var<double> z = reparameterize(g.mu, g.sigma, net.constant(eps));
    Var<double> recon = vae_decode(net, v.model, z);
    return vae_loss(motion, recon, g.mu, g.log_sigma, v.model.cfg).total;
  };
  const auto r = mcld::testing::grad_check(v.store, loss, 0, RngHandle(1));
  EXPECT_EQ(static_cast<std::size_t>(r.probed), v.store.scalar_count());
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}
