#include <gtest/gtest.h>

#include <cmath>

#include "mcld/pipeline.hpp"

using namespace mcld;

namespace {

RunConfig tiny_config() {
  RunConfig c = desk_profile();
  c.vae = {1, 2, 16, 8, 32, 1.0, 1e-4};
  c.krp.layers = 1;
  c.krp.heads = 2;
  c.krp.width = 8;
  c.krp.ff_width = 16;
  c.krp.hidden = 8;
  c.region_points = 16;
  c.mae = {1, 2, 8, 16, 8};
  c.fusion.hidden = 8;
  c.denoiser = {1, 2, 16, 32};
  c.batch_size = 4;
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  return c;
}

std::vector<Sample> tiny_data(const RunConfig& c, int count, std::uint64_t seed) {
  return generate_dataset(dataset_spec(c, count, seed), default_skeleton(c.data.joint_count));
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b, const std::string& prefix) {
  int seen = 0;
  for (const auto& t : a.params) {
    if (t.name.rfind(prefix, 0) != 0) continue;
    bool found = false;
    for (const auto& u : b.params)
      if (u.name == t.name) {
        if (u.data != t.data) return false;
        found = true;
      }
    if (!found) return false;
    ++seen;
  }
  return seen > 0;
}

}  // namespace

TEST(TrainVae, OverfitsOneSample) {
  RunConfig c = tiny_config();
  c.batch_size = 1;
  c.stage1_epochs = 2000;
  c.optimizer.lr = 3e-3;
  const auto data = tiny_data(c, 1, 5);
  const SkeletonSpec sk = default_skeleton(21);
  const TrainResult r = train_vae(c, data, sk);
  ASSERT_TRUE(r.finished);
  ASSERT_EQ(r.log.size(), 2000u);
  double tail = 0.0;
  for (std::size_t i = r.log.size() - 50; i < r.log.size(); ++i) tail += r.log[i].l_mr / 50.0;
  EXPECT_LT(tail, 0.05 * mean_bone_length(data, sk));
}

TEST(TrainVae, StepZeroLossMatchesInitialCheckpoint) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c, 8, 1);
  const SkeletonSpec sk = default_skeleton(21);
  TrainOptions stop;
  stop.stop_after_step = 0;
  const TrainResult init = train_vae(c, data, sk, stop);
  EXPECT_FALSE(init.finished);
  EXPECT_TRUE(init.log.empty());
  const TrainResult full = train_vae(c, data, sk);

  const ModelSet ms = load_models(init.checkpoint);
  const auto centered = detail::center_all(data, sk);
  const auto order = detail::epoch_order(c.seed, detail::kStage1Stream, 0, 8);
  std::vector<Mat<Real>> grads = ms.store.zero_grads();
  double loss = 0.0;
  for (int i = 0; i < c.batch_size; ++i)
    loss += vae_sample_grad(ms, centered[order[i]].sample.future.frames,
                            detail::sample_rng(c.seed, detail::kStage1Stream, 0, i), 0.25, grads)
                .total /
            c.batch_size;
  EXPECT_EQ(full.log.front().loss, loss);
}

TEST(TrainVae, SameSeedSameCheckpoint) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c, 8, 2);
  const SkeletonSpec sk = default_skeleton(21);
  const TrainResult a = train_vae(c, data, sk);
  const TrainResult b = train_vae(c, data, sk);
  EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
  RunConfig other = c;
  other.seed = 1;
  EXPECT_NE(serialize_checkpoint(train_vae(other, data, sk).checkpoint), serialize_checkpoint(a.checkpoint));
}

TEST(TrainVae, ResumeReproducesTrajectory) {
  RunConfig c = tiny_config();
  c.stage1_epochs = 4;
  const auto data = tiny_data(c, 8, 3);
  const SkeletonSpec sk = default_skeleton(21);
  const TrainResult full = train_vae(c, data, sk);
  TrainOptions stop;
  stop.stop_after_step = 3;
  const TrainResult first = train_vae(c, data, sk, stop);
  ASSERT_EQ(first.log.size(), 3u);
  const Checkpoint mid = deserialize_checkpoint(serialize_checkpoint(first.checkpoint));
  const TrainResult rest = train_vae(c, data, sk, {}, &mid);
  ASSERT_TRUE(rest.finished);
  ASSERT_EQ(first.log.size() + rest.log.size(), full.log.size());
  for (std::size_t i = 0; i < rest.log.size(); ++i) EXPECT_NEAR(rest.log[i].loss, full.log[i + 3].loss, 1e-5);
  EXPECT_EQ(serialize_checkpoint(rest.checkpoint), serialize_checkpoint(full.checkpoint));
}

TEST(TrainDiffusion, MissingStage1) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c, 4, 4);
  try {
    train_diffusion(c, data, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingStage1);
  }
  Checkpoint wrong;
  wrong.stage = "diffusion";
  EXPECT_THROW(train_diffusion(c, data, &wrong), Error);
}

class Stage2 : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new RunConfig(tiny_config());
    data_ = new std::vector<Sample>(tiny_data(*cfg_, 8, 6));
    vae_ = new Checkpoint(train_vae(*cfg_, *data_, default_skeleton(21)).checkpoint);
  }
  static void TearDownTestSuite() {
    delete cfg_;
    delete data_;
    delete vae_;
  }
  static RunConfig* cfg_;
  static std::vector<Sample>* data_;
  static Checkpoint* vae_;
};

RunConfig* Stage2::cfg_ = nullptr;
std::vector<Sample>* Stage2::data_ = nullptr;
Checkpoint* Stage2::vae_ = nullptr;

TEST_F(Stage2, VaeStaysFrozen) {
  const TrainResult r = train_diffusion(*cfg_, *data_, vae_);
  ASSERT_TRUE(r.finished);
  EXPECT_TRUE(same_tensors(*vae_, r.checkpoint, "vae."));
  TrainOptions stop;
  stop.stop_after_step = 0;
  EXPECT_FALSE(same_tensors(train_diffusion(*cfg_, *data_, vae_, stop).checkpoint, r.checkpoint, "den."));
  for (const auto& s : r.log) EXPECT_TRUE(std::isfinite(s.loss));
}

TEST_F(Stage2, ResumeReproducesTrajectory) {
  RunConfig c = *cfg_;
  c.stage2_epochs = 3;
  const TrainResult full = train_diffusion(c, *data_, vae_);
  TrainOptions stop;
  stop.stop_after_step = 2;
  const TrainResult first = train_diffusion(c, *data_, vae_, stop);
  const Checkpoint mid = deserialize_checkpoint(serialize_checkpoint(first.checkpoint));
  const TrainResult rest = train_diffusion(c, *data_, vae_, {}, &mid);
  ASSERT_EQ(first.log.size() + rest.log.size(), full.log.size());
  for (std::size_t i = 0; i < rest.log.size(); ++i) EXPECT_NEAR(rest.log[i].loss, full.log[i + 2].loss, 1e-5);
  EXPECT_THROW(train_diffusion(c, *data_, vae_, {}, vae_), Error);
}

TEST_F(Stage2, CheckpointCallbackCadence) {
  RunConfig c = *cfg_;
  c.checkpoint_every = 2;
  std::vector<long> steps;
  TrainOptions o;
  o.on_checkpoint = [&](const Checkpoint& ck) { steps.push_back(ck.step); };
  train_diffusion(c, *data_, vae_, o);
  EXPECT_EQ(steps, (std::vector<long>{2, 4}));
}

TEST_F(Stage2, PredictContract) {
  const ModelSet ms = load_models(train_diffusion(*cfg_, *data_, vae_).checkpoint);
  const Sample& s = data_->front();
  PredictInfo info;
  const auto preds = predict(ms, s.history, s.scene, 3, 11, &info);
  ASSERT_EQ(preds.size(), 3u);
  for (const auto& p : preds) {
    EXPECT_EQ(p.frame_count(), 10);
    EXPECT_EQ(p.joint_count(), 21);
    EXPECT_TRUE(p.frames.allFinite());
  }
  EXPECT_GT(ade(preds[0], preds[1]), 0.0);
  EXPECT_GT(ade(preds[1], preds[2]), 0.0);
  const auto again = predict(ms, s.history, s.scene, 3, 11);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(again[i].frames, preds[i].frames);
  EXPECT_NE(predict(ms, s.history, s.scene, 1, 12)[0].frames, preds[0].frames);
  EXPECT_TRUE(info.box.has_value());
  EXPECT_THROW(predict(ms, s.history, s.scene, 0, 1), Error);
}

TEST_F(Stage2, EvaluateNeedsTwoRuns) {
  const ModelSet ms = load_models(*vae_);
  try {
    evaluate(ms, *data_, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientRuns);
  }
  const EvalReport r = evaluate(ms, std::vector<Sample>(data_->begin(), data_->begin() + 2), 2, 0);
  EXPECT_EQ(r.n_runs, 2);
  EXPECT_EQ(r.pose_error_by_horizon.size(), 4u);
  EXPECT_TRUE(std::isfinite(r.ade));
  EXPECT_GE(r.ade_ci95, 0.0);
}

TEST(Evaluate, GroundTruthAgainstItself) {
  const RunConfig c = tiny_config();
  const auto data = tiny_data(c, 3, 8);
  std::vector<MotionSequence> gts;
  for (const auto& s : data) gts.push_back(s.future);
  const EvalReport r = evaluate_predictions(gts, gts, 0);
  EXPECT_EQ(r.ade, 0.0);
  EXPECT_EQ(r.fde, 0.0);
  for (const auto& [h, v] : r.pose_error_by_horizon) EXPECT_EQ(v, 0.0) << h;
  for (const auto& [h, v] : r.path_error_by_horizon) EXPECT_EQ(v, 0.0) << h;
}

TEST(Pipeline, ShapeMismatchAndBadSkeleton) {
  RunConfig c = tiny_config();
  const auto data = tiny_data(c, 2, 9);
  c.data.future_frames = 12;
  try {
    train_vae(c, data, default_skeleton(21));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  SkeletonSpec bad = default_skeleton(21);
  bad.root_index = 40;
  EXPECT_THROW(build_models(tiny_config(), bad), Error);
}
