#pragma once

// Motion prediction errors in millimeters, and aggregation of repeated
// evaluation runs into means with normal-approximation 95% intervals.

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcld/domain.hpp"
#include "mcld/error.hpp"

namespace mcld {

enum class DistanceNorm { kL2, kL1 };

namespace detail {

inline void check_pair(const MotionSequence& pred, const MotionSequence& gt) {
  require_shape(pred.frames.rows() == gt.frames.rows() && pred.frames.cols() == gt.frames.cols(),
                "metrics: prediction and ground truth shapes differ");
}

inline double joint_distance(const MotionSequence& a, const MotionSequence& b, int f, int j, DistanceNorm norm) {
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = a.frames(f, 3 * j + c) - b.frames(f, 3 * j + c);
    acc += norm == DistanceNorm::kL2 ? d * d : std::abs(d);
  }
  return norm == DistanceNorm::kL2 ? std::sqrt(acc) : acc;
}

/// Mean over frames [first, last) and the given joints, in mm.
inline double mean_distance_mm(const MotionSequence& pred, const MotionSequence& gt, int first, int last,
                               const std::vector<int>& joints, DistanceNorm norm) {
  double sum = 0.0;
  for (int f = first; f < last; ++f)
    for (int j : joints) sum += joint_distance(pred, gt, f, j, norm);
  return 1000.0 * sum / static_cast<double>((last - first) * static_cast<int>(joints.size()));
}

inline std::vector<int> all_joints(int n) {
  std::vector<int> j(n);
  for (int i = 0; i < n; ++i) j[i] = i;
  return j;
}

}  // namespace detail

/// MPJPE over the first `upto_frame` frames and all joints.
inline double pose_error(const MotionSequence& pred, const MotionSequence& gt, int upto_frame,
                         DistanceNorm norm = DistanceNorm::kL2) {
  detail::check_pair(pred, gt);
  require_shape(upto_frame >= 1 && upto_frame <= gt.frame_count(), "pose_error: upto_frame out of range");
  return detail::mean_distance_mm(pred, gt, 0, upto_frame, detail::all_joints(gt.joint_count()), norm);
}

/// MPJPE restricted to the trajectory joint.
inline double path_error(const MotionSequence& pred, const MotionSequence& gt, int root_index, int upto_frame,
                         DistanceNorm norm = DistanceNorm::kL2) {
  detail::check_pair(pred, gt);
  require_shape(upto_frame >= 1 && upto_frame <= gt.frame_count(), "path_error: upto_frame out of range");
  require_shape(root_index >= 0 && root_index < gt.joint_count(), "path_error: root index out of range");
  return detail::mean_distance_mm(pred, gt, 0, upto_frame, {root_index}, norm);
}

inline double ade(const MotionSequence& pred, const MotionSequence& gt, DistanceNorm norm = DistanceNorm::kL2) {
  detail::check_pair(pred, gt);
  return detail::mean_distance_mm(pred, gt, 0, gt.frame_count(), detail::all_joints(gt.joint_count()), norm);
}

inline double fde(const MotionSequence& pred, const MotionSequence& gt, DistanceNorm norm = DistanceNorm::kL2) {
  detail::check_pair(pred, gt);
  const int last = gt.frame_count();
  return detail::mean_distance_mm(pred, gt, last - 1, last, detail::all_joints(gt.joint_count()), norm);
}

inline const std::vector<double>& standard_horizons() {
  static const std::vector<double> h{0.5, 1.0, 1.5, 2.0, 3.0};
  return h;
}

/// Frames covered by a horizon: frame i of the future lies (i + 1) / fps
/// seconds after the last observed frame.
inline int frames_for_horizon(double seconds, double fps) {
  return static_cast<int>(std::floor(seconds * fps + 1e-9));
}

/// One evaluation pass (or the aggregate over passes).
struct EvalReport {
  std::map<double, double> pose_error_by_horizon;  // seconds -> mm
  std::map<double, double> path_error_by_horizon;
  double ade = 0.0;
  double fde = 0.0;
  int n_runs = 1;
  std::map<double, double> pose_ci95;
  std::map<double, double> path_ci95;
  double ade_ci95 = 0.0;
  double fde_ci95 = 0.0;
  DistanceNorm norm = DistanceNorm::kL2;
};

/// Metrics of one prediction per ground truth, averaged over the set.
inline EvalReport evaluate_predictions(const std::vector<MotionSequence>& preds, const std::vector<MotionSequence>& gts,
                                       int root_index, DistanceNorm norm = DistanceNorm::kL2) {
  require_shape(preds.size() == gts.size() && !gts.empty(), "evaluate: need one prediction per ground truth");
  EvalReport r;
  r.norm = norm;
  const double fps = gts.front().fps;
  const int frames = gts.front().frame_count();
  for (double h : standard_horizons()) {
    const int upto = frames_for_horizon(h, fps);
    if (upto < 1 || upto > frames) continue;
    double pose = 0.0, path = 0.0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      pose += pose_error(preds[i], gts[i], upto, norm);
      path += path_error(preds[i], gts[i], root_index, upto, norm);
    }
    r.pose_error_by_horizon[h] = pose / static_cast<double>(gts.size());
    r.path_error_by_horizon[h] = path / static_cast<double>(gts.size());
  }
  for (std::size_t i = 0; i < gts.size(); ++i) {
    r.ade += ade(preds[i], gts[i], norm);
    r.fde += fde(preds[i], gts[i], norm);
  }
  r.ade /= static_cast<double>(gts.size());
  r.fde /= static_cast<double>(gts.size());
  return r;
}

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;
};

/// Mean and 1.96 * sd / sqrt(n), with the sample (n - 1) standard deviation.
inline MeanCi mean_ci95(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  MeanCi out;
  for (double v : values) out.mean += v;
  out.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  out.ci95 = 1.96 * sd / std::sqrt(n);
  return out;
}

inline EvalReport aggregate_runs(const std::vector<EvalReport>& runs) {
  if (runs.size() < 2)
    throw Error(ErrorCode::kInsufficientRuns, "need at least 2 runs for a confidence interval, got " +
                                                  std::to_string(runs.size()));
  EvalReport out;
  out.n_runs = static_cast<int>(runs.size());
  out.norm = runs.front().norm;
  auto collect = [&](auto getter) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(getter(r));
    return mean_ci95(v);
  };
  for (const auto& [h, unused] : runs.front().pose_error_by_horizon) {
    (void)unused;
    MeanCi pose = collect([h = h](const EvalReport& r) { return r.pose_error_by_horizon.at(h); });
    MeanCi path = collect([h = h](const EvalReport& r) { return r.path_error_by_horizon.at(h); });
    out.pose_error_by_horizon[h] = pose.mean;
    out.pose_ci95[h] = pose.ci95;
    out.path_error_by_horizon[h] = path.mean;
    out.path_ci95[h] = path.ci95;
  }
  MeanCi a = collect([](const EvalReport& r) { return r.ade; });
  MeanCi f = collect([](const EvalReport& r) { return r.fde; });
  out.ade = a.mean;
  out.ade_ci95 = a.ci95;
  out.fde = f.mean;
  out.fde_ci95 = f.ci95;
  return out;
}

inline std::string horizon_key(double seconds) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1fs", seconds);
  return buf;
}

/// Flat document: one key per table cell.
inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["n_runs"] = r.n_runs;
  j["norm"] = r.norm == DistanceNorm::kL2 ? "l2" : "l1";
  for (const auto& [h, v] : r.pose_error_by_horizon) {
    const std::string k = horizon_key(h);
    j["pose_" + k + "_mm"] = v;
    j["pose_" + k + "_ci95"] = r.pose_ci95.count(h) ? r.pose_ci95.at(h) : 0.0;
    j["path_" + k + "_mm"] = r.path_error_by_horizon.at(h);
    j["path_" + k + "_ci95"] = r.path_ci95.count(h) ? r.path_ci95.at(h) : 0.0;
  }
  j["ade_mm"] = r.ade;
  j["ade_ci95"] = r.ade_ci95;
  j["fde_mm"] = r.fde;
  j["fde_ci95"] = r.fde_ci95;
  return j;
}

}  // namespace mcld
