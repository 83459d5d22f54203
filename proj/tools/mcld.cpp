// mcld command line: dataset generation, two-stage training, prediction,
// evaluation and visualization export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mcld/checkpoint.hpp"
#include "mcld/config.hpp"
#include "mcld/dataset_io.hpp"
#include "mcld/pipeline.hpp"
#include "mcld/synthdata.hpp"
#include "mcld/viz.hpp"

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat JSON config file");
  cmd->add_option("--profile", c.profile, "base profile")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output directory");
}

mcld::RunConfig resolve_config(const Common& c) {
  mcld::RunConfig cfg = mcld::load_config(c.config, c.profile);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::string in_out(const Common& c, const std::string& given, const std::string& name) {
  return given.empty() ? c.out + "/" + name : given;
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw mcld::Error(mcld::ErrorCode::kIoFailure, "cannot create '" + dir + "': " + ec.message());
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw mcld::Error(mcld::ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

json motion_json(const mcld::MotionSequence& m) {
  json frames = json::array();
  for (int f = 0; f < m.frame_count(); ++f) {
    json joints = json::array();
    for (int j = 0; j < m.joint_count(); ++j) {
      const Eigen::Vector3d p = m.joint(f, j);
      joints.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())});
    }
    frames.push_back(std::move(joints));
  }
  return frames;
}

json step_json(const mcld::StepLog& s) {
  return {{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"l_mr", s.l_mr}, {"l_kl", s.l_kl},
          {"grad_norm", s.grad_norm}, {"region_fallbacks", s.region_fallbacks}};
}

mcld::TrainOptions train_options(const std::string& out_dir, const std::string& stage, std::ofstream& log_file) {
  mcld::TrainOptions o;
  o.out_dir = out_dir;
  o.log = &std::cerr;
  o.on_step = [&log_file](const mcld::StepLog& s) { log_file << step_json(s).dump() << "\n"; };
  o.on_checkpoint = [out_dir, stage](const mcld::Checkpoint& ck) {
    mcld::save_checkpoint(ck, out_dir + "/" + stage + "_step" + std::to_string(ck.step) + ".ckpt");
  };
  return o;
}

std::ofstream open_log(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw mcld::Error(mcld::ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  return f;
}

const mcld::Sample& pick(const std::vector<mcld::Sample>& data, int index) {
  if (index < 0 || index >= static_cast<int>(data.size()))
    throw mcld::Error(mcld::ErrorCode::kBadConfig, "--index " + std::to_string(index) + " out of range (dataset has " +
                                                       std::to_string(data.size()) + " samples)");
  return data[static_cast<std::size_t>(index)];
}

int fail(const std::string& code, const std::string& message, int status) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-aware human motion prediction with multi-condition latent diffusion"};
  app.require_subcommand(1);

  Common c;
  std::string data_path, ckpt_path, resume_path, vae_path, norm = "l2";
  int train_count = -1, test_count = -1, index = 0, samples = 1, runs = -1;

  auto* gen = app.add_subcommand("gen-data", "write synthetic train.jsonl and test.jsonl");
  add_common(gen, c);
  gen->add_option("--train-count", train_count, "training samples (default data.train_count)");
  gen->add_option("--test-count", test_count, "test samples (default data.test_count)");

  auto* tvae = app.add_subcommand("train-vae", "stage 1: train the motion VAE");
  add_common(tvae, c);
  tvae->add_option("--data", data_path, "training set (default <out>/train.jsonl)");
  tvae->add_option("--resume", resume_path, "continue from a stage-1 checkpoint");

  auto* tdiff = app.add_subcommand("train-diffusion", "stage 2: train KRP, encoder, fusion and denoiser");
  add_common(tdiff, c);
  tdiff->add_option("--data", data_path, "training set (default <out>/train.jsonl)");
  tdiff->add_option("--vae", vae_path, "stage-1 checkpoint (default <out>/vae.ckpt)");
  tdiff->add_option("--resume", resume_path, "continue from a stage-2 checkpoint");

  auto* pred = app.add_subcommand("predict", "sample futures for one test input");
  add_common(pred, c);
  pred->add_option("--ckpt", ckpt_path, "stage-2 checkpoint (default <out>/diffusion.ckpt)");
  pred->add_option("--data", data_path, "dataset (default <out>/test.jsonl)");
  pred->add_option("--index", index, "sample index");
  pred->add_option("--samples", samples, "number of draws")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("evaluate", "ADE/FDE/pose/path errors over repeated runs");
  add_common(eval, c);
  eval->add_option("--ckpt", ckpt_path, "stage-2 checkpoint (default <out>/diffusion.ckpt)");
  eval->add_option("--data", data_path, "dataset (default <out>/test.jsonl)");
  eval->add_option("--runs", runs, "number of runs (default eval.runs)");
  eval->add_option("--norm", norm, "joint distance")->check(CLI::IsMember({"l2", "l1"}));

  auto* viz = app.add_subcommand("viz", "export SVG overlays and plotted coordinates");
  add_common(viz, c);
  viz->add_option("--ckpt", ckpt_path, "stage-2 checkpoint (default <out>/diffusion.ckpt)");
  viz->add_option("--data", data_path, "dataset (default <out>/test.jsonl)");
  viz->add_option("--index", index, "sample index");
  viz->add_option("--samples", samples, "number of draws")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("Usage", e.what(), 2);
  }

  try {
    if (*gen) {
      const mcld::RunConfig cfg = resolve_config(c);
      make_out_dir(c.out);
      const mcld::SkeletonSpec skeleton = mcld::default_skeleton(cfg.data.joint_count);
      const int n_train = train_count >= 0 ? train_count : cfg.data.train_count;
      const int n_test = test_count >= 0 ? test_count : cfg.data.test_count;
      const auto train = mcld::generate_dataset(mcld::dataset_spec(cfg, n_train, cfg.seed), skeleton);
      const auto test = mcld::generate_dataset(mcld::dataset_spec(cfg, n_test, cfg.seed + 1000003), skeleton);
      mcld::write_dataset(train, c.out + "/train.jsonl", skeleton);
      mcld::write_dataset(test, c.out + "/test.jsonl", skeleton);
      std::cout << json{{"train", c.out + "/train.jsonl"}, {"train_count", train.size()},
                        {"test", c.out + "/test.jsonl"}, {"test_count", test.size()}}.dump()
                << "\n";
    } else if (*tvae) {
      const mcld::RunConfig cfg = resolve_config(c);
      make_out_dir(c.out);
      const std::string path = in_out(c, data_path, "train.jsonl");
      const auto data = mcld::read_dataset(path);
      const mcld::SkeletonSpec skeleton = mcld::read_skeleton(path);
      std::optional<mcld::Checkpoint> resume;
      if (!resume_path.empty()) resume = mcld::load_checkpoint(resume_path);
      std::ofstream log = open_log(c.out + "/vae_log.jsonl");
      const auto r = mcld::train_vae(cfg, data, skeleton, train_options(c.out, "vae", log), resume ? &*resume : nullptr);
      mcld::save_checkpoint(r.checkpoint, c.out + "/vae.ckpt");
      std::cout << json{{"checkpoint", c.out + "/vae.ckpt"}, {"steps", r.checkpoint.step},
                        {"final", r.log.empty() ? json() : step_json(r.log.back())}}.dump()
                << "\n";
    } else if (*tdiff) {
      const mcld::RunConfig cfg = resolve_config(c);
      make_out_dir(c.out);
      const std::string vae_file = in_out(c, vae_path, "vae.ckpt");
      if (!std::filesystem::exists(vae_file))
        throw mcld::Error(mcld::ErrorCode::kMissingStage1, "no stage-1 checkpoint at '" + vae_file + "'");
      const mcld::Checkpoint vae = mcld::load_checkpoint(vae_file);
      const auto data = mcld::read_dataset(in_out(c, data_path, "train.jsonl"));
      std::optional<mcld::Checkpoint> resume;
      if (!resume_path.empty()) resume = mcld::load_checkpoint(resume_path);
      std::ofstream log = open_log(c.out + "/diffusion_log.jsonl");
      const auto r = mcld::train_diffusion(cfg, data, &vae, train_options(c.out, "diffusion", log), resume ? &*resume : nullptr);
      mcld::save_checkpoint(r.checkpoint, c.out + "/diffusion.ckpt");
      std::cout << json{{"checkpoint", c.out + "/diffusion.ckpt"}, {"steps", r.checkpoint.step},
                        {"final", r.log.empty() ? json() : step_json(r.log.back())}}.dump()
                << "\n";
    } else if (*pred || *viz) {
      const mcld::Checkpoint ck = mcld::load_checkpoint(in_out(c, ckpt_path, "diffusion.ckpt"));
      if (ck.stage != "diffusion") throw mcld::Error(mcld::ErrorCode::kBadCheckpoint, "prediction needs a stage-2 checkpoint");
      const mcld::ModelSet ms = mcld::load_models(ck);
      const auto data = mcld::read_dataset(in_out(c, data_path, "test.jsonl"));
      const mcld::Sample& s = pick(data, index);
      const std::uint64_t seed = c.seed ? *c.seed : ms.cfg.seed;
      mcld::PredictInfo info;
      std::vector<mcld::MotionSequence> out;
      if (samples > 0) out = mcld::predict(ms, s.history, s.scene, samples, seed, &info);
      if (info.fallback) std::cerr << "predict: no scene point inside the key region, used the whole scene\n";
      make_out_dir(c.out);
      if (*pred) {
        json preds = json::array();
        for (const auto& m : out) preds.push_back(motion_json(m));
        json box;
        if (info.box) {
          const auto& b = *info.box;
          box = {{"origin", {b.origin.x(), b.origin.y(), b.origin.z()}}, {"dims", {b.dims.x(), b.dims.y(), b.dims.z()}}};
        }
        write_json(c.out + "/predictions.json",
                   {{"index", index}, {"seed", seed}, {"fallback", info.fallback}, {"box", box}, {"predictions", preds}});
        std::cout << json{{"predictions", c.out + "/predictions.json"}, {"count", out.size()}}.dump() << "\n";
      } else {
        const auto files = mcld::export_viz(s.history, s.scene, s.future, out, ms.skeleton, c.out + "/viz");
        std::cout << json{{"files", files}}.dump() << "\n";
      }
    } else if (*eval) {
      const mcld::Checkpoint ck = mcld::load_checkpoint(in_out(c, ckpt_path, "diffusion.ckpt"));
      if (ck.stage != "diffusion") throw mcld::Error(mcld::ErrorCode::kBadCheckpoint, "evaluation needs a stage-2 checkpoint");
      const mcld::ModelSet ms = mcld::load_models(ck);
      const auto data = mcld::read_dataset(in_out(c, data_path, "test.jsonl"));
      const std::uint64_t seed = c.seed ? *c.seed : ms.cfg.seed;
      const int n = runs >= 0 ? runs : ms.cfg.eval_runs;
      const auto report = mcld::evaluate(ms, data, n, seed, norm == "l1" ? mcld::DistanceNorm::kL1 : mcld::DistanceNorm::kL2,
                                         &std::cerr);
      make_out_dir(c.out);
      json j = mcld::to_json(report);
      write_json(c.out + "/eval.json", j);
      std::cout << j.dump() << "\n";
    }
  } catch (const mcld::Error& e) {
    const std::string what = e.what();
    const std::string code(mcld::to_string(e.code()));
    const std::string prefix = code + ": ";
    return fail(code, what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what, 1);
  } catch (const std::exception& e) {
    return fail("Internal", e.what(), 1);
  }
  return 0;
}
