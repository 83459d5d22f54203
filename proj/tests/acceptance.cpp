// Acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "mcld/pipeline.hpp"

using namespace mcld;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::VectorXd normal_vec(int n, RngHandle& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Mat<double> random_mat(int r, int c, RngHandle& rng) { return init_normal<double>(r, c, 1.0, rng); }

// 1
Outcome inversion_identity() {
  const auto t0 = Clock::now();
  const DiffusionSchedule s = build_schedule(1000);
  RngHandle rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd z = normal_vec(32, rng), e = normal_vec(32, rng);
    const int k = static_cast<int>(rng.uniform_int(1, 1000));
    const double a = s.alpha_at(k);
    const Eigen::VectorXd back = denoise_step(forward_noise_step(z, a, e), e, a);
    worst = std::max(worst, (back - z).cwiseAbs().maxCoeff() / z.cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  return {worst < 1e-9 && t < 5.0, fmt("max rel err %.3g, %.2f s", worst, t)};
}

// 2
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const int probes = 200;
  double worst_vae = 0, worst_mae = 0, worst_den = 0;
  {
    VaeConfig c;
    c.layers = 1;
    c.heads = 2;
    c.width = 16;
    c.ff_width = 16;
    c.latent_dim = 8;
    ParamStore<double> store;
    const VaeModel<double> m = make_vae(store, c, 2, 3, RngHandle(201));
    RngHandle rng(202);
    const Mat<double> target = random_mat(2, 9, rng), eps = random_mat(1, 8, rng);
    auto loss = [&](const Net<double>& net) {
      Var<double> motion = net.constant(target);
      GaussianParams<double> g = vae_encode(net, m, motion);
      Var<double> recon = vae_decode(net, m, reparameterize(g.mu, g.sigma, net.constant(eps)));
      return vae_loss(motion, recon, g.mu, g.log_sigma, c).total;
    };
    worst_vae = mcld::testing::grad_check(store, loss, probes, RngHandle(203)).max_rel_err;
  }
  {
    ParamStore<double> store;
    RngHandle rng(211);
    const TransformerLayerParams p = make_transformer_layer(store, "l", 8, 2, 16, rng);
    const int xi = store.add("x", random_mat(3, 8, rng));
    const int kvi = store.add("kv", random_mat(4, 8, rng));
    const Mat<double> w = random_mat(3, 8, rng);
    auto loss = [&](const Net<double>& net) {
      return ag::sum(ag::mul(transformer_layer(net, p, net.p(xi), net.p(kvi)), net.constant(w)));
    };
    worst_mae = mcld::testing::grad_check(store, loss, probes, RngHandle(212)).max_rel_err;
  }
  {
    ParamStore<double> store;
    FusionConfig fc;
    const McfModel<double> fusion = make_mcf(store, fc, 4, RngHandle(221));
    DenoiserConfig dc;
    dc.layers = 1;
    dc.heads = 2;
    dc.width = 8;
    dc.ff_width = 8;
    const DenoiserModel<double> den = make_denoiser(store, dc, 4, fc.output_dim(4), RngHandle(222));
    RngHandle rng(223);
    const Eigen::VectorXd body = normal_vec(4, rng), scene = normal_vec(4, rng), inter = normal_vec(4, rng);
    const Eigen::VectorXd z = normal_vec(4, rng), eps = normal_vec(4, rng);
    auto loss = [&](const Net<double>& net) {
      ConditionVars<double> c{net.constant(body.transpose()), net.constant(scene.transpose()),
                              net.constant(inter.transpose())};
      FusedCondition<double> f = fuse_step(net, fusion, c, 9);
      Var<double> eps_hat = predict_noise(net, den, net.constant(z.transpose()), f.joint, 9);
      return noise_prediction_loss(net.constant(eps.transpose()), eps_hat);
    };
    worst_den = mcld::testing::grad_check(store, loss, probes, RngHandle(224)).max_rel_err;
  }
  const double t = seconds_since(t0);
  const bool ok = worst_vae < 1e-4 && worst_mae < 1e-4 && worst_den < 1e-4 && t < 120.0;
  return {ok, fmt("rel err vae %.2g, mae layer %.2g, mcf+denoiser %.2g, %.1f s", worst_vae, worst_mae, worst_den, t)};
}

// 3
Outcome mask_oracle() {
  const auto t0 = Clock::now();
  RngHandle rng(301);
  ScenePointCloud s;
  s.points.resize(10000, 3);
  for (Eigen::Index i = 0; i < s.points.size(); ++i) s.points.data()[i] = rng.uniform(-2.0, 6.0);
  long mismatches = 0, inside = 0;
  for (int b = 0; b < 100; ++b) {
    KeyRegionBox box;
    for (int a = 0; a < 3; ++a) {
      box.origin[a] = rng.uniform(-1.0, 3.0);
      box.dims[a] = rng.uniform(0.5, 4.0);
    }
    const MaskedScene m = mask_scene(s, box, MaskMode::kHard);
    for (int i = 0; i < s.size(); ++i) {
      bool in = true;
      for (int a = 0; a < 3; ++a) {
        const double p = s.points(i, a);
        in = in && box.origin[a] <= p && p <= box.origin[a] + box.dims[a];
      }
      inside += in ? 1 : 0;
      const bool kept = m.weights[i] == 1.0 && m.points.row(i) == s.points.row(i);
      const bool dropped = m.weights[i] == 0.0 && m.points.row(i).isZero(0.0);
      if (in ? !kept : !dropped) ++mismatches;
    }
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 10.0,
          fmt("%.0f mismatches over 1e6 point-box pairs (%.0f inside), %.2f s", static_cast<double>(mismatches),
              static_cast<double>(inside), t)};
}

// 4
Outcome attention_invariants() {
  const auto t0 = Clock::now();
  const RunConfig cfg = desk_profile();
  const SkeletonSpec sk = default_skeleton(cfg.data.joint_count);
  const auto data = generate_dataset(dataset_spec(cfg, 4, 401), sk);
  MaeConfig mc = cfg.mae;
  mc.latent_dim = cfg.vae.latent_dim;
  ParamStore<double> store;
  const MaeModel<double> m = make_mae(store, mc, cfg.data.history_frames, sk.joint_count, RngHandle(402));
  double row_err = 0.0, perm_err = 0.0;
  std::size_t matrices = 0;
  RngHandle rng(403);
  for (const auto& s : data) {
    const CenteredSample c = center_sample(s, sk.root_index);
    const ScenePointCloud region = subsample_scene(c.sample.scene, cfg.region_points, rng);
    AttentionProbe probe;
    const ConditionBundle a = encode_conditions(store, m, c.sample.history, region, &probe);
    row_err = std::max(row_err, probe.max_row_sum_error);
    matrices += probe.matrices;
    std::vector<int> perm(region.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = region.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    ScenePointCloud shuffled;
    shuffled.points.resize(region.size(), 3);
    for (int i = 0; i < region.size(); ++i) shuffled.points.row(i) = region.points.row(perm[i]);
    const ConditionBundle b = encode_conditions(store, m, c.sample.history, shuffled);
    perm_err = std::max({perm_err, (a.scene - b.scene).cwiseAbs().maxCoeff(),
                         (a.interaction - b.interaction).cwiseAbs().maxCoeff()});
  }
  const double t = seconds_since(t0);
  return {row_err < 1e-6 && perm_err < 1e-5 && matrices > 0 && t < 30.0,
          fmt("max |row sum - 1| %.2g over %.0f matrices, permutation diff %.2g, %.2f s", row_err,
              static_cast<double>(matrices), perm_err, t)};
}

// 5
Outcome closed_form_values() {
  const int dim = 32;
  Eigen::VectorXd mu = Eigen::VectorXd::Ones(dim);
  const RowMatrixXd m = RowMatrixXd::Zero(2, 6);
  VaeConfig unit;
  unit.lambda_mr = 1.0;
  unit.lambda_kl = 1.0;
  const double kl = vae_loss_values(m, m, mu, Eigen::VectorXd::Ones(dim), unit).l_kl / dim;
  Tape<double> tape(false);
  RngHandle rng(501);
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd e = normal_vec(dim, rng);
    total += noise_prediction_loss(tape.constant(e.transpose()), tape.constant(Mat<double>::Zero(1, dim))).scalar();
  }
  const double mean = total / draws;
  return {kl == 0.5 && std::abs(mean - dim) < 0.05 * dim,
          fmt("KL per component %.17g, zero-predictor loss %.4g vs C_e %.0f", kl, mean, dim)};
}

// 8
Outcome metrics_oracle() {
  RngHandle rng(801);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = static_cast<int>(rng.uniform_int(1, 12)), joints = static_cast<int>(rng.uniform_int(1, 22));
    MotionSequence p(frames, joints), g(frames, joints);
    for (Eigen::Index i = 0; i < p.frames.size(); ++i) {
      p.frames.data()[i] = rng.uniform(-3, 3);
      g.frames.data()[i] = rng.uniform(-3, 3);
    }
    const int root = static_cast<int>(rng.uniform_int(0, joints - 1));
    const int upto = static_cast<int>(rng.uniform_int(1, frames));
    auto dist = [&](int f, int j) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = p.frames(f, 3 * j + c) - g.frames(f, 3 * j + c);
        s += d * d;
      }
      return std::sqrt(s);
    };
    double all = 0.0, head = 0.0, last = 0.0, path = 0.0;
    for (int f = 0; f < frames; ++f)
      for (int j = 0; j < joints; ++j) {
        all += dist(f, j);
        if (f < upto) head += dist(f, j);
        if (f == frames - 1) last += dist(f, j);
      }
    for (int f = 0; f < upto; ++f) path += dist(f, root);
    const double naive_ade = 1000.0 * all / (frames * joints);
    const double naive_fde = 1000.0 * last / joints;
    const double naive_pose = 1000.0 * head / (upto * joints);
    const double naive_path = 1000.0 * path / upto;
    worst = std::max({worst, std::abs(ade(p, g) - naive_ade), std::abs(fde(p, g) - naive_fde),
                      std::abs(pose_error(p, g, upto) - naive_pose), std::abs(path_error(p, g, root, upto) - naive_path)});
  }
  return {worst < 1e-9, fmt("max abs diff %.3g mm over 100 instances", worst)};
}

struct TrainedDesk {
  RunConfig cfg;
  SkeletonSpec skeleton;
  std::vector<Sample> train, test;
  Checkpoint vae, diffusion;
  double bone = 0.0;
  double stage1_final = 0.0;
  long stage1_steps = 0;
  double stage2_first = 0.0, stage2_best = 0.0;
  long stage2_steps = 0, stage2_hit = -1;
  EvalReport report;
  double seconds = 0.0;
};

double window_mean(const std::vector<StepLog>& log, std::size_t lo, std::size_t hi, bool mr) {
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += mr ? log[i].l_mr : log[i].loss;
  return s / static_cast<double>(hi - lo);
}

// 6
Outcome desk_training(TrainedDesk& d) {
  const auto t0 = Clock::now();
  d.cfg = desk_profile();
  d.skeleton = default_skeleton(d.cfg.data.joint_count);
  d.train = generate_dataset(dataset_spec(d.cfg, d.cfg.data.train_count, d.cfg.seed), d.skeleton);
  d.test = generate_dataset(dataset_spec(d.cfg, d.cfg.data.test_count, d.cfg.seed + 1000003), d.skeleton);
  d.bone = mean_bone_length(d.train, d.skeleton);

  TrainOptions opts;
  opts.log = &std::cerr;
  const TrainResult s1 = train_vae(d.cfg, d.train, d.skeleton, opts);
  d.vae = s1.checkpoint;
  d.stage1_steps = static_cast<long>(s1.log.size());
  const std::size_t per_epoch = (d.train.size() + d.cfg.batch_size - 1) / d.cfg.batch_size;
  d.stage1_final = window_mean(s1.log, s1.log.size() - per_epoch, s1.log.size(), true);

  const TrainResult s2 = train_diffusion(d.cfg, d.train, &d.vae, opts);
  d.diffusion = s2.checkpoint;
  d.stage2_steps = static_cast<long>(s2.log.size());
  d.stage2_first = window_mean(s2.log, 0, std::min<std::size_t>(100, s2.log.size()), false);
  d.stage2_best = d.stage2_first;
  for (std::size_t end = 100; end <= s2.log.size(); ++end) {
    const double w = window_mean(s2.log, end - 100, end, false);
    if (w < d.stage2_best) d.stage2_best = w;
    if (d.stage2_hit < 0 && w < 0.5 * d.stage2_first) d.stage2_hit = static_cast<long>(end);
  }

  const ModelSet ms = load_models(d.diffusion);
  d.report = evaluate(ms, d.test, d.cfg.eval_runs, d.cfg.seed, DistanceNorm::kL2, &std::cerr);
  d.seconds = seconds_since(t0);

  const bool s1_ok = d.stage1_steps <= 2000 && d.stage1_final < 0.05 * d.bone;
  const bool s2_ok = d.stage2_steps <= 5000 && d.stage2_hit > 0;
  const bool time_ok = d.seconds < 1800.0;
  std::string detail = fmt("stage 1: l_mr %.4f m after %.0f steps (limit %.4f m); ", d.stage1_final,
                           static_cast<double>(d.stage1_steps), 0.05 * d.bone);
  detail += fmt("stage 2: first-100 mean %.4f, best 100-step mean %.4f, below half at step %.0f of %.0f; ",
                d.stage2_first, d.stage2_best, static_cast<double>(d.stage2_hit), static_cast<double>(d.stage2_steps));
  detail += fmt("pipeline %.1f s, ade %.1f mm", d.seconds, d.report.ade);
  return {s1_ok && s2_ok && time_ok, detail};
}

bool report_cells_ok(const EvalReport& r) {
  auto ok = [](double v, double ci) { return std::isfinite(v) && std::isfinite(ci) && ci >= 0.0; };
  bool good = ok(r.ade, r.ade_ci95) && ok(r.fde, r.fde_ci95) && !r.pose_error_by_horizon.empty();
  for (const auto& [h, v] : r.pose_error_by_horizon) good = good && r.pose_ci95.count(h) && ok(v, r.pose_ci95.at(h));
  for (const auto& [h, v] : r.path_error_by_horizon) good = good && r.path_ci95.count(h) && ok(v, r.path_ci95.at(h));
  return good;
}

// 7
Outcome prediction_contract(const TrainedDesk& d) {
  const ModelSet ms = load_models(d.diffusion);
  const Sample& s = d.test.front();
  const auto preds = predict(ms, s.history, s.scene, 20, 701);
  double min_pair = INFINITY;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = i + 1; j < preds.size(); ++j) min_pair = std::min(min_pair, ade(preds[i], preds[j]));
  const auto again = predict(ms, s.history, s.scene, 20, 701);
  bool identical = again.size() == preds.size();
  for (std::size_t i = 0; identical && i < preds.size(); ++i) identical = again[i].frames == preds[i].frames;
  const bool cells = report_cells_ok(d.report);
  return {preds.size() == 20 && min_pair > 0.0 && identical && cells,
          fmt("min pairwise ade %.3g mm, repeat identical %.0f, report cells finite with ci95 >= 0: %.0f", min_pair,
              identical ? 1.0 : 0.0, cells ? 1.0 : 0.0)};
}

// 9
Outcome ablation_harness(const TrainedDesk& d) {
  const auto t0 = Clock::now();
  struct Variant {
    const char* name;
    nlohmann::json overlay;
  };
  const std::vector<Variant> variants = {
      {"B", {{"fusion.use_scene", false}, {"fusion.use_interaction", false}}},
      {"S", {{"fusion.use_body", false}, {"fusion.use_interaction", false}}},
      {"I", {{"fusion.use_body", false}, {"fusion.use_scene", false}}},
      {"B+S", {{"fusion.use_interaction", false}}},
      {"B+I", {{"fusion.use_scene", false}}},
      {"S+I", {{"fusion.use_body", false}}},
      {"B+S+I", nlohmann::json::object()},
      {"no KRP", {{"krp.enabled", false}}},
      {"concat", {{"fusion.mode", "concat"}}},
  };
  int passed = 0;
  std::string failures;
  for (const auto& v : variants) {
    try {
      RunConfig c = d.cfg;
      apply_flat_json(c, v.overlay);
      c.stage2_epochs = 1;
      const TrainResult r = train_diffusion(c, d.train, &d.vae);
      bool finite = r.finished && !r.log.empty();
      for (const auto& s : r.log) finite = finite && std::isfinite(s.loss);
      const ModelSet ms = load_models(r.checkpoint);
      const auto p = predict(ms, d.test.front().history, d.test.front().scene, 1, 1);
      finite = finite && p.front().frames.allFinite();
      if (finite) {
        ++passed;
      } else {
        failures += std::string(" ") + v.name;
      }
    } catch (const std::exception& e) {
      failures += std::string(" ") + v.name + " (" + e.what() + ")";
    }
  }
  const double t = seconds_since(t0);
  std::string detail = fmt("%.0f of %.0f variants trained one epoch, %.1f s", passed, static_cast<double>(variants.size()), t);
  if (!failures.empty()) detail += "; failed:" + failures;
  return {passed == static_cast<int>(variants.size()), detail};
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> results;
  auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    results.push_back({name, o});
  };
  run("1 inversion identity", inversion_identity);
  run("2 gradient fidelity", gradient_fidelity);
  run("3 mask oracle", mask_oracle);
  run("4 attention invariants", attention_invariants);
  run("5 closed-form values", closed_form_values);
  TrainedDesk desk;
  bool trained = false;
  run("6 desk end-to-end training", [&] {
    Outcome o = desk_training(desk);
    trained = true;
    return o;
  });
  run("7 prediction contract", [&] {
    if (!trained) return Outcome{false, "no trained checkpoint"};
    return prediction_contract(desk);
  });
  run("8 metrics oracle", metrics_oracle);
  run("9 ablation harness", [&] {
    if (!trained) return Outcome{false, "no trained checkpoint"};
    return ablation_harness(desk);
  });
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.second.pass; });
  std::printf("%zu/%zu criteria passed\n", results.size() - static_cast<std::size_t>(failed), results.size());
  return failed == 0 ? 0 : 1;
}
