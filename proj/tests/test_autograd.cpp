#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "grad_check.hpp"
#include "mcld/autograd.hpp"
#include "mcld/nn.hpp"
#include "mcld/optim.hpp"

using namespace mcld;
using mcld::testing::grad_check;

namespace {

struct Fixture {
  ParamStore<double> store;
  RngHandle rng{11};

  int add(const std::string& name, int r, int c, double sd = 1.0) { return store.add(name, init_normal<double>(r, c, sd, rng)); }
};

// Contracts any matrix to a scalar with fixed random weights so that every
// output entry influences the loss.
Var<double> contract(const Net<double>& net, Var<double> x, std::uint64_t seed = 99) {
  RngHandle r(seed);
  Var<double> w = net.constant(init_normal<double>(x.rows(), x.cols(), 1.0, r));
  return ag::sum(ag::mul(x, w));
}

void expect_grad_ok(ParamStore<double>& store, const std::function<Var<double>(const Net<double>&)>& f, int probes = 60) {
  const auto r = grad_check(store, f, probes, RngHandle(5));
  EXPECT_LT(r.max_rel_err, 1e-6) << r.worst;
}

}  // namespace

TEST(Autograd, MatmulFamily) {
  Fixture fx;
  const int a = fx.add("a", 3, 4), b = fx.add("b", 4, 2), c = fx.add("c", 5, 4);
  expect_grad_ok(fx.store, [&](const Net<double>& n) { return contract(n, ag::matmul(n.p(a), n.p(b))); });
  expect_grad_ok(fx.store, [&](const Net<double>& n) { return contract(n, ag::matmul_nt(n.p(a), n.p(c))); });
}

TEST(Autograd, ElementwiseAndBroadcast) {
  Fixture fx;
  const int a = fx.add("a", 3, 4), b = fx.add("b", 3, 4), row = fx.add("row", 1, 4), col = fx.add("col", 3, 1);
  expect_grad_ok(fx.store, [&](const Net<double>& n) {
    Var<double> x = ag::add(ag::mul(n.p(a), n.p(b)), ag::sub(n.p(a), ag::scale(n.p(b), 0.5)));
    x = ag::add_row(x, n.p(row));
    x = ag::mul_col(x, n.p(col));
    return contract(n, ag::square(x));
  });
}

TEST(Autograd, Nonlinearities) {
  Fixture fx;
  const int a = fx.add("a", 4, 5);
  expect_grad_ok(fx.store, [&](const Net<double>& n) {
    Var<double> x = n.p(a);
    return ag::add(ag::add(contract(n, ag::sigmoid(x), 1), contract(n, ag::softplus(x), 2)),
                   ag::add(contract(n, ag::exp(ag::scale(x, 0.3)), 3), contract(n, ag::relu(x), 4)));
  });
}

TEST(Autograd, SoftmaxAndLayerNorm) {
  Fixture fx;
  const int a = fx.add("a", 3, 6), g = fx.add("g", 1, 6), bt = fx.add("b", 1, 6);
  expect_grad_ok(fx.store, [&](const Net<double>& n) {
    return ag::add(contract(n, ag::softmax_rows(n.p(a)), 1), contract(n, ag::layer_norm(n.p(a), n.p(g), n.p(bt)), 2));
  });
}

TEST(Autograd, ReductionsSlicesConcat) {
  Fixture fx;
  const int a = fx.add("a", 4, 6), b = fx.add("b", 4, 3), c = fx.add("c", 2, 6);
  expect_grad_ok(fx.store, [&](const Net<double>& n) {
    Var<double> x = ag::concat_cols<double>({ag::slice_cols(n.p(a), 1, 3), n.p(b)});
    Var<double> y = ag::concat_rows<double>({n.p(a), n.p(c), ag::slice_rows(n.p(a), 2, 2)});
    return ag::add(ag::add(contract(n, x, 1), contract(n, ag::mean_rows(y), 2)),
                   ag::add(ag::mean(ag::group_norms(n.p(a), 3)), ag::sum(n.p(c))));
  });
}

TEST(Autograd, ClampMinBlocksGradientBelowFloor) {
  Tape<double> tape(true);
  ParamStore<double> store;
  Mat<double> v(1, 3);
  v << -2.0, 0.5, 3.0;
  const int i = store.add("v", v);
  Net<double> net{tape, store};
  Var<double> y = ag::sum(ag::clamp_min(net.p(i), 0.0));
  tape.backward(y);
  auto grads = store.zero_grads();
  tape.collect_param_grads(grads);
  EXPECT_EQ(y.scalar(), 3.5);
  EXPECT_EQ(grads[i](0, 0), 0.0);
  EXPECT_EQ(grads[i](0, 1), 1.0);
  EXPECT_EQ(grads[i](0, 2), 1.0);
}

TEST(Autograd, SoftmaxRowsSumToOneOnLargeLogits) {
  Tape<double> tape(false);
  Mat<double> logits(2, 3);
  logits << 1000.0, 999.0, -1000.0, -5.0, -5.0, -5.0;
  const Mat<double> s = ag::softmax_rows(tape.constant(logits)).value();
  EXPECT_TRUE(s.allFinite());
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
  EXPECT_NEAR(s(1, 0), 1.0 / 3.0, 1e-15);
}

TEST(Autograd, SoftmaxTwoLogitOracle) {
  // softmax(ln 3, 0) = (3/4, 1/4).
  Tape<double> tape(false);
  Mat<double> logits(1, 2);
  logits << std::log(3.0), 0.0;
  const Mat<double> s = ag::softmax_rows(tape.constant(logits)).value();
  EXPECT_NEAR(s(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.25, 1e-15);
}

TEST(Autograd, FrozenLeavesGetNoGradient) {
  ParamStore<double> store;
  RngHandle rng(1);
  const int a = store.add("a", init_normal<double>(2, 2, 1.0, rng));
  const int b = store.add("b", init_normal<double>(2, 2, 1.0, rng), false);
  Tape<double> tape(true);
  Net<double> net{tape, store};
  tape.backward(ag::sum(ag::matmul(net.p(a), net.p(b))));
  auto grads = store.zero_grads();
  tape.collect_param_grads(grads);
  EXPECT_GT(grads[a].norm(), 0.0);
  EXPECT_EQ(grads[b].norm(), 0.0);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  // With zero weight decay the bias-corrected first step is lr * g / (|g| + eps).
  ParamStore<double> store;
  Mat<double> v(1, 2);
  v << 1.0, -1.0;
  const int i = store.add("w", v);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW<double> opt(store, cfg);
  auto g = store.zero_grads();
  g[i] << 4.0, -0.5;
  opt.step(store, g);
  EXPECT_NEAR(store.value(i)(0, 0), 1.0 - 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_NEAR(store.value(i)(0, 1), -1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
}

TEST(AdamW, DecoupledDecayAndFrozenEntries) {
  ParamStore<double> store;
  const int a = store.add("a", Mat<double>::Constant(1, 1, 2.0));
  const int b = store.add("b", Mat<double>::Constant(1, 1, 2.0), false);
  AdamWConfig cfg;
  cfg.lr = 0.5;
  cfg.weight_decay = 0.1;
  AdamW<double> opt(store, cfg);
  opt.step(store, store.zero_grads());
  EXPECT_NEAR(store.value(a)(0, 0), 2.0 - 0.5 * 0.1 * 2.0, 1e-15);
  EXPECT_EQ(store.value(b)(0, 0), 2.0);
}

TEST(AdamW, LearningRateScalePerPrefix) {
  ParamStore<double> store;
  const int a = store.add("krp.w", Mat<double>::Zero(1, 1));
  const int b = store.add("mae.w", Mat<double>::Zero(1, 1));
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.weight_decay = 0.0;
  AdamW<double> opt(store, cfg);
  opt.set_lr_scale(store, "krp.", 0.1);
  auto g = store.zero_grads();
  g[a](0, 0) = 1.0;
  g[b](0, 0) = 1.0;
  opt.step(store, g);
  EXPECT_NEAR(store.value(a)(0, 0), -0.1, 1e-7);
  EXPECT_NEAR(store.value(b)(0, 0), -1.0, 1e-7);
}

TEST(Optim, ClipGlobalNorm) {
  std::vector<Mat<double>> g{Mat<double>::Constant(1, 1, 3.0), Mat<double>::Constant(1, 1, 4.0)};
  EXPECT_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g[0](0, 0), 0.6, 1e-15);
  std::vector<Mat<double>> small{Mat<double>::Constant(1, 1, 0.3)};
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small[0](0, 0), 0.3);
}

TEST(Optim, CosineSchedule) {
  EXPECT_EQ(scheduled_lr(1e-3, "none", 500, 1000), 1e-3);
  EXPECT_NEAR(scheduled_lr(1e-3, "cosine", 0, 1000), 1e-3, 1e-18);
  EXPECT_NEAR(scheduled_lr(1e-3, "cosine", 500, 1000), 5e-4, 1e-15);
  EXPECT_NEAR(scheduled_lr(1e-3, "cosine", 1000, 1000), 0.0, 1e-18);
}

TEST(ParamStore, ChecksumTracksPrefix) {
  ParamStore<float> store;
  RngHandle rng(3);
  const int a = store.add("vae.a", init_normal<float>(2, 2, 1.0, rng));
  store.add("den.b", init_normal<float>(2, 2, 1.0, rng));
  const auto vae = store.checksum("vae.");
  const auto all = store.checksum();
  store.value(store.index("den.b"))(0, 0) += 1.0f;
  EXPECT_EQ(store.checksum("vae."), vae);
  EXPECT_NE(store.checksum(), all);
  store.value(a)(1, 1) += 1.0f;
  EXPECT_NE(store.checksum("vae."), vae);
  EXPECT_THROW(store.add("vae.a", Mat<float>::Zero(1, 1)), Error);
}
