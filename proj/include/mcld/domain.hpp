#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcld/error.hpp"

namespace mcld {

// Coordinates are meters in a right-handed, y-up frame. The floor is the
// x-z plane at y = 0.

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SkeletonSpec {
  int joint_count = 0;
  std::vector<std::string> joint_names;
  int root_index = 0;
  std::vector<std::pair<int, int>> bone_edges;
};

/// F frames of N_b joints. Stored as an F x (3 N_b) row-major matrix so a
/// row is one flattened skeleton (x0 y0 z0 x1 y1 z1 ...).
struct MotionSequence {
  RowMatrixXd frames;
  double fps = 5.0;

  MotionSequence() = default;
  MotionSequence(int frame_count, int joint_count, double fps_ = 5.0)
      : frames(RowMatrixXd::Zero(frame_count, 3 * joint_count)), fps(fps_) {}

  int frame_count() const { return static_cast<int>(frames.rows()); }
  int joint_count() const { return static_cast<int>(frames.cols() / 3); }

  Eigen::Vector3d joint(int frame, int j) const {
    return {frames(frame, 3 * j), frames(frame, 3 * j + 1), frames(frame, 3 * j + 2)};
  }
  void set_joint(int frame, int j, const Eigen::Vector3d& p) {
    frames(frame, 3 * j) = p.x();
    frames(frame, 3 * j + 1) = p.y();
    frames(frame, 3 * j + 2) = p.z();
  }
};

/// N_s x 3 point set.
struct ScenePointCloud {
  RowMatrixXd points;

  int size() const { return static_cast<int>(points.rows()); }
};

struct SampleMeta {
  std::string behavior;
  std::int64_t seed = 0;
};

struct Sample {
  ScenePointCloud scene;
  MotionSequence history;
  MotionSequence future;
  SampleMeta meta;
};

struct ValidationReport {
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
};

namespace detail {

inline void check_motion(const MotionSequence& m, const SkeletonSpec& spec, const std::string& label,
                         ValidationReport& report) {
  if (m.frame_count() < 1) report.issues.push_back(label + ": needs at least one frame");
  if (m.frames.cols() != 3 * spec.joint_count) {
    report.issues.push_back(label + ": joint count " + std::to_string(m.frames.cols() / 3) +
                            " does not match skeleton (" + std::to_string(spec.joint_count) + ")");
    return;
  }
  if (!(m.fps > 0.0) || !std::isfinite(m.fps)) report.issues.push_back(label + ": fps must be positive");
  for (int f = 0; f < m.frame_count(); ++f) {
    for (int j = 0; j < spec.joint_count; ++j) {
      for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(m.frames(f, 3 * j + c))) {
          report.issues.push_back(label + ": non-finite coordinate at frame " + std::to_string(f) +
                                  ", joint " + std::to_string(j));
          c = 3;
        }
      }
    }
  }
}

}  // namespace detail

inline ValidationReport validate_skeleton(const SkeletonSpec& spec) {
  ValidationReport report;
  if (spec.joint_count < 2) report.issues.push_back("skeleton: joint_count must be >= 2");
  if (spec.root_index < 0 || spec.root_index >= spec.joint_count)
    report.issues.push_back("skeleton: root_index out of range");
  if (!spec.joint_names.empty() && static_cast<int>(spec.joint_names.size()) != spec.joint_count)
    report.issues.push_back("skeleton: joint_names size differs from joint_count");
  for (const auto& [a, b] : spec.bone_edges) {
    if (a < 0 || b < 0 || a >= spec.joint_count || b >= spec.joint_count)
      report.issues.push_back("skeleton: bone edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") references an invalid joint");
  }
  return report;
}

/// Lists every violated invariant. Never throws.
inline ValidationReport validate_sample(const Sample& s, const SkeletonSpec& spec) {
  ValidationReport report = validate_skeleton(spec);
  detail::check_motion(s.history, spec, "history", report);
  detail::check_motion(s.future, spec, "future", report);
  if (s.history.fps != s.future.fps) {
    report.issues.push_back("fps mismatch: history " + std::to_string(s.history.fps) + " vs future " +
                            std::to_string(s.future.fps));
  }
  if (s.scene.size() < 1) report.issues.push_back("scene: needs at least one point");
  if (s.scene.points.cols() != 3 && s.scene.size() > 0) report.issues.push_back("scene: points must be N x 3");
  for (int i = 0; i < s.scene.size(); ++i) {
    if (!s.scene.points.row(i).allFinite()) {
      report.issues.push_back("scene: non-finite point " + std::to_string(i));
    }
  }
  return report;
}

inline void translate(MotionSequence& m, const Eigen::Vector3d& t) {
  for (int f = 0; f < m.frame_count(); ++f)
    for (int j = 0; j < m.joint_count(); ++j)
      for (int c = 0; c < 3; ++c) m.frames(f, 3 * j + c) += t[c];
}

inline void translate(ScenePointCloud& s, const Eigen::Vector3d& t) {
  for (int i = 0; i < s.size(); ++i)
    for (int c = 0; c < 3; ++c) s.points(i, c) += t[c];
}

struct CenteredSample {
  Sample sample;
  Eigen::Vector3d offset;
};

/// Moves the root joint of the last history frame to the origin. Adding
/// `offset` back to every coordinate undoes the mapping.
inline CenteredSample center_sample(const Sample& s, int root_index) {
  CenteredSample out{s, s.history.joint(s.history.frame_count() - 1, root_index)};
  translate(out.sample.scene, -out.offset);
  translate(out.sample.history, -out.offset);
  translate(out.sample.future, -out.offset);
  return out;
}

inline Sample uncenter_sample(const Sample& s, const Eigen::Vector3d& offset) {
  Sample out = s;
  translate(out.scene, offset);
  translate(out.history, offset);
  translate(out.future, offset);
  return out;
}

}  // namespace mcld
