#pragma once

// Procedural rooms and scene-aware motions. Rooms span [0, x] x [0, y] x [0, z]
// with the floor at y = 0. Obstacles are axis-aligned boxes standing on the
// floor. Bodies are a rigid joint template attached to a root trajectory with a
// phase-driven limb swing.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mcld/domain.hpp"
#include "mcld/error.hpp"
#include "mcld/rng.hpp"

namespace mcld {

struct RoomSpec {
  Eigen::Vector3d extents{4.0, 3.0, 4.0};
  int obstacle_count = 2;
  Eigen::Vector3d obstacle_min{0.4, 0.4, 0.4};
  Eigen::Vector3d obstacle_max{1.0, 1.0, 1.0};
  double points_per_m2 = 25.0;

  void validate() const {
    if ((extents.array() <= 0.0).any()) throw Error(ErrorCode::kBadConfig, "room: extents must be positive");
    if (obstacle_count < 0) throw Error(ErrorCode::kBadConfig, "room: obstacle_count must be >= 0");
    if (!(points_per_m2 > 0.0)) throw Error(ErrorCode::kBadConfig, "room: density must be positive");
    if ((obstacle_min.array() <= 0.0).any() || (obstacle_max.array() < obstacle_min.array()).any())
      throw Error(ErrorCode::kBadConfig, "room: bad obstacle size range");
  }
};

struct Obstacle {
  Eigen::Vector3d min_corner;
  Eigen::Vector3d size;

  /// Distance in the floor plane from (x, z) to the footprint rectangle.
  double footprint_distance(double x, double z) const {
    const double dx = std::max({min_corner.x() - x, 0.0, x - (min_corner.x() + size.x())});
    const double dz = std::max({min_corner.z() - z, 0.0, z - (min_corner.z() + size.z())});
    return std::hypot(dx, dz);
  }
  Eigen::Vector2d footprint_center() const {
    return {min_corner.x() + 0.5 * size.x(), min_corner.z() + 0.5 * size.z()};
  }
};

struct GeneratedScene {
  ScenePointCloud cloud;
  std::vector<Obstacle> obstacles;
  Eigen::Vector3d extents;
};

enum class BehaviorKind { kWalkStraight, kWalkTurn, kCircleObstacle, kApproachAndSit, kIdle };

inline const std::array<BehaviorKind, 5>& all_behaviors() {
  static const std::array<BehaviorKind, 5> b{BehaviorKind::kWalkStraight, BehaviorKind::kWalkTurn,
                                             BehaviorKind::kCircleObstacle, BehaviorKind::kApproachAndSit,
                                             BehaviorKind::kIdle};
  return b;
}

inline std::string to_string(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::kWalkStraight: return "walk_straight";
    case BehaviorKind::kWalkTurn: return "walk_turn";
    case BehaviorKind::kCircleObstacle: return "circle_obstacle";
    case BehaviorKind::kApproachAndSit: return "approach_and_sit";
    case BehaviorKind::kIdle: return "idle";
  }
  return "unknown";
}

struct BehaviorSpec {
  BehaviorKind kind = BehaviorKind::kWalkStraight;
  double speed_min = 0.8;  // m/s
  double speed_max = 1.4;

  void validate() const {
    if (speed_min < 0.0 || speed_max < speed_min) throw Error(ErrorCode::kBadConfig, "behavior: bad speed range");
  }
};

inline constexpr double kMinClearance = 0.1;  // root to obstacle footprint, meters

// ---------------------------------------------------------------------------
// Skeleton template

namespace detail {

enum class Limb { kNone, kLeftLeg, kRightLeg, kLeftArm, kRightArm };

struct TemplateJoint {
  const char* name;
  Eigen::Vector3d stand;  // relative to the root, facing +z
  Eigen::Vector3d sit;
  Limb limb;
  double swing;           // forward swing amplitude at full gait, meters
};

inline const std::vector<TemplateJoint>& body_template() {
  using V = Eigen::Vector3d;
  static const std::vector<TemplateJoint> joints{
      {"pelvis", V(0, 0, 0), V(0, 0, 0), Limb::kNone, 0.0},
      {"spine", V(0, 0.12, 0), V(0, 0.12, -0.02), Limb::kNone, 0.0},
      {"spine1", V(0, 0.24, 0), V(0, 0.24, -0.03), Limb::kNone, 0.0},
      {"chest", V(0, 0.38, 0), V(0, 0.38, -0.04), Limb::kNone, 0.0},
      {"neck", V(0, 0.55, 0), V(0, 0.54, -0.02), Limb::kNone, 0.0},
      {"head", V(0, 0.65, 0.02), V(0, 0.64, 0.0), Limb::kNone, 0.0},
      {"head_top", V(0, 0.8, 0.0), V(0, 0.79, -0.02), Limb::kNone, 0.0},
      {"left_clavicle", V(0.08, 0.5, 0), V(0.08, 0.5, -0.02), Limb::kNone, 0.0},
      {"left_shoulder", V(0.2, 0.5, 0), V(0.2, 0.5, -0.02), Limb::kNone, 0.0},
      {"left_elbow", V(0.22, 0.22, 0), V(0.22, 0.25, 0.05), Limb::kLeftArm, 0.08},
      {"left_wrist", V(0.23, -0.02, 0), V(0.2, 0.05, 0.25), Limb::kLeftArm, 0.16},
      {"right_clavicle", V(-0.08, 0.5, 0), V(-0.08, 0.5, -0.02), Limb::kNone, 0.0},
      {"right_shoulder", V(-0.2, 0.5, 0), V(-0.2, 0.5, -0.02), Limb::kNone, 0.0},
      {"right_elbow", V(-0.22, 0.22, 0), V(-0.22, 0.25, 0.05), Limb::kRightArm, 0.08},
      {"right_wrist", V(-0.23, -0.02, 0), V(-0.2, 0.05, 0.25), Limb::kRightArm, 0.16},
      {"left_hip", V(0.1, -0.05, 0), V(0.1, -0.05, 0.02), Limb::kLeftLeg, 0.02},
      {"left_knee", V(0.1, -0.48, 0), V(0.1, -0.05, 0.42), Limb::kLeftLeg, 0.15},
      {"left_ankle", V(0.1, -0.9, 0), V(0.1, -0.45, 0.45), Limb::kLeftLeg, 0.3},
      {"right_hip", V(-0.1, -0.05, 0), V(-0.1, -0.05, 0.02), Limb::kRightLeg, 0.02},
      {"right_knee", V(-0.1, -0.48, 0), V(-0.1, -0.05, 0.42), Limb::kRightLeg, 0.15},
      {"right_ankle", V(-0.1, -0.9, 0), V(-0.1, -0.45, 0.45), Limb::kRightLeg, 0.3},
  };
  return joints;
}

inline int template_index(const std::string& name) {
  const auto& t = body_template();
  for (std::size_t i = 0; i < t.size(); ++i)
    if (name == t[i].name) return static_cast<int>(i);
  return -1;
}

}  // namespace detail

inline constexpr double kStandingRootHeight = 0.95;
inline constexpr double kSittingRootHeight = 0.5;

/// 21-joint (default) or 18-joint skeleton built from the body template.
/// The 18-joint variant drops the head top and both clavicles.
inline SkeletonSpec default_skeleton(int joint_count = 21) {
  if (joint_count != 21 && joint_count != 18)
    throw Error(ErrorCode::kBadConfig, "default skeleton has 18 or 21 joints");
  SkeletonSpec spec;
  for (const auto& j : detail::body_template()) {
    const std::string name = j.name;
    if (joint_count == 18 && (name == "head_top" || name == "left_clavicle" || name == "right_clavicle")) continue;
    spec.joint_names.push_back(name);
  }
  spec.joint_count = static_cast<int>(spec.joint_names.size());
  spec.root_index = 0;
  auto idx = [&](const std::string& n) {
    for (int i = 0; i < spec.joint_count; ++i)
      if (spec.joint_names[i] == n) return i;
    return -1;
  };
  const std::vector<std::pair<std::string, std::string>> bones{
      {"pelvis", "spine"},          {"spine", "spine1"},           {"spine1", "chest"},
      {"chest", "neck"},            {"neck", "head"},              {"head", "head_top"},
      {"chest", "left_clavicle"},   {"left_clavicle", "left_shoulder"},
      {"chest", "right_clavicle"},  {"right_clavicle", "right_shoulder"},
      {"chest", "left_shoulder"},   {"chest", "right_shoulder"},
      {"left_shoulder", "left_elbow"},   {"left_elbow", "left_wrist"},
      {"right_shoulder", "right_elbow"}, {"right_elbow", "right_wrist"},
      {"pelvis", "left_hip"},       {"left_hip", "left_knee"},     {"left_knee", "left_ankle"},
      {"pelvis", "right_hip"},      {"right_hip", "right_knee"},   {"right_knee", "right_ankle"},
  };
  for (const auto& [a, b] : bones) {
    const int ia = idx(a), ib = idx(b);
    if (ia < 0 || ib < 0) continue;
    // Chest connects to shoulders directly only when clavicles are absent.
    const bool via_clavicle = (a == "chest" && (b == "left_shoulder" || b == "right_shoulder"));
    if (via_clavicle && idx("left_clavicle") >= 0) continue;
    spec.bone_edges.emplace_back(ia, ib);
  }
  return spec;
}

/// Mean bone length of the standing template, meters.
inline double mean_bone_length(const SkeletonSpec& spec) {
  double sum = 0.0;
  for (const auto& [a, b] : spec.bone_edges) {
    const int ta = detail::template_index(spec.joint_names.at(a));
    const int tb = detail::template_index(spec.joint_names.at(b));
    if (ta < 0 || tb < 0) throw Error(ErrorCode::kBadConfig, "skeleton joint not in body template");
    sum += (detail::body_template()[ta].stand - detail::body_template()[tb].stand).norm();
  }
  return spec.bone_edges.empty() ? 0.0 : sum / static_cast<double>(spec.bone_edges.size());
}

// ---------------------------------------------------------------------------
// Scenes

namespace detail {

inline void sample_rect(std::vector<Eigen::Vector3d>& out, const Eigen::Vector3d& origin, const Eigen::Vector3d& u,
                        const Eigen::Vector3d& v, double density, RngHandle& rng) {
  const long n = std::lround(u.norm() * v.norm() * density);
  for (long i = 0; i < n; ++i) out.push_back(origin + rng.uniform() * u + rng.uniform() * v);
}

inline bool footprints_overlap(const Obstacle& a, const Obstacle& b) {
  return a.min_corner.x() < b.min_corner.x() + b.size.x() && b.min_corner.x() < a.min_corner.x() + a.size.x() &&
         a.min_corner.z() < b.min_corner.z() + b.size.z() && b.min_corner.z() < a.min_corner.z() + a.size.z();
}

}  // namespace detail

inline GeneratedScene generate_scene(const RoomSpec& spec, RngHandle rng) {
  spec.validate();
  GeneratedScene scene;
  scene.extents = spec.extents;
  constexpr int kMaxTries = 1000;
  for (int o = 0; o < spec.obstacle_count; ++o) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Obstacle ob;
      for (int a = 0; a < 3; ++a) ob.size[a] = rng.uniform(spec.obstacle_min[a], spec.obstacle_max[a]);
      ob.size.y() = std::min(ob.size.y(), spec.extents.y());
      if (ob.size.x() > spec.extents.x() || ob.size.z() > spec.extents.z()) continue;
      ob.min_corner = {rng.uniform(0.0, spec.extents.x() - ob.size.x()), 0.0,
                       rng.uniform(0.0, spec.extents.z() - ob.size.z())};
      bool clash = false;
      for (const auto& other : scene.obstacles) clash = clash || detail::footprints_overlap(ob, other);
      if (clash) continue;
      scene.obstacles.push_back(ob);
      placed = true;
    }
    if (!placed)
      throw Error(ErrorCode::kPlacementFailure,
                  "could not place obstacle " + std::to_string(o) + " without overlap in " + std::to_string(kMaxTries) + " tries");
  }

  std::vector<Eigen::Vector3d> pts;
  const Eigen::Vector3d ex(spec.extents.x(), 0, 0), ez(0, 0, spec.extents.z());
  const long floor_count = std::lround(spec.extents.x() * spec.extents.z() * spec.points_per_m2);
  for (long i = 0; i < floor_count; ++i) pts.push_back(rng.uniform() * ex + rng.uniform() * ez);
  for (const auto& ob : scene.obstacles) {
    const Eigen::Vector3d c = ob.min_corner;
    const Eigen::Vector3d sx(ob.size.x(), 0, 0), sy(0, ob.size.y(), 0), sz(0, 0, ob.size.z());
    detail::sample_rect(pts, c + sy, sx, sz, spec.points_per_m2, rng);   // top
    detail::sample_rect(pts, c, sx, sy, spec.points_per_m2, rng);        // front
    detail::sample_rect(pts, c + sz, sx, sy, spec.points_per_m2, rng);   // back
    detail::sample_rect(pts, c, sz, sy, spec.points_per_m2, rng);        // left
    detail::sample_rect(pts, c + sx, sz, sy, spec.points_per_m2, rng);   // right
  }
  scene.cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int a = 0; a < 3; ++a)
      scene.cloud.points(static_cast<Eigen::Index>(i), a) = std::clamp(pts[i][a], 0.0, spec.extents[a]);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Motions

struct RootTrack {
  std::vector<Eigen::Vector2d> xz;   // floor position per frame
  std::vector<double> heading;       // yaw, direction (sin h, cos h) in (x, z)
  std::vector<double> phase;         // gait phase, radians
  std::vector<double> gait_amount;   // 0 = still, 1 = full stride
  std::vector<double> sit_amount;    // 0 = standing, 1 = seated
};

namespace detail {

inline constexpr double kStride = 1.4;          // meters per gait cycle
inline constexpr double kWallMargin = 0.3;
inline constexpr double kGenerationClearance = kMinClearance + 0.15;

inline bool track_is_free(const RootTrack& track, const GeneratedScene& scene) {
  for (const auto& p : track.xz) {
    if (p.x() < kWallMargin || p.y() < kWallMargin || p.x() > scene.extents.x() - kWallMargin ||
        p.y() > scene.extents.z() - kWallMargin)
      return false;
    for (const auto& ob : scene.obstacles)
      if (ob.footprint_distance(p.x(), p.y()) < kGenerationClearance) return false;
  }
  return true;
}

inline Eigen::Vector2d direction(double heading) { return {std::sin(heading), std::cos(heading)}; }

inline void finish_track(RootTrack& t, double speed) {
  const std::size_t n = t.xz.size();
  t.phase.assign(n, 0.0);
  t.gait_amount.resize(n, std::min(1.0, speed / 1.2));
  t.sit_amount.resize(n, 0.0);
  double dist = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    dist += (t.xz[i] - t.xz[i - 1]).norm();
    t.phase[i] = 2.0 * M_PI * dist / kStride;
  }
}

inline RootTrack straight_track(const Eigen::Vector2d& start, double heading, double step, int frames) {
  RootTrack t;
  const Eigen::Vector2d d = direction(heading);
  for (int f = 0; f < frames; ++f) {
    t.xz.push_back(start + (step * f) * d);
    t.heading.push_back(heading);
  }
  return t;
}

}  // namespace detail

/// Pose the body template along a root track.
inline MotionSequence pose_track(const RootTrack& track, const SkeletonSpec& skeleton, double fps) {
  const int frames = static_cast<int>(track.xz.size());
  MotionSequence m(frames, skeleton.joint_count, fps);
  std::vector<int> tmpl(skeleton.joint_count);
  for (int j = 0; j < skeleton.joint_count; ++j) {
    tmpl[j] = detail::template_index(skeleton.joint_names.at(j));
    if (tmpl[j] < 0) throw Error(ErrorCode::kBadConfig, "joint '" + skeleton.joint_names[j] + "' not in body template");
  }
  for (int f = 0; f < frames; ++f) {
    const double h = track.heading[f];
    const double c = std::cos(h), s = std::sin(h);
    const double sit = track.sit_amount[f];
    const double swing = std::sin(track.phase[f]) * track.gait_amount[f] * (1.0 - sit);
    const double root_y = kStandingRootHeight + sit * (kSittingRootHeight - kStandingRootHeight);
    const Eigen::Vector3d root(track.xz[f].x(), root_y, track.xz[f].y());
    for (int j = 0; j < skeleton.joint_count; ++j) {
      const auto& tj = detail::body_template()[tmpl[j]];
      Eigen::Vector3d local = (1.0 - sit) * tj.stand + sit * tj.sit;
      switch (tj.limb) {
        case detail::Limb::kLeftLeg: local.z() += tj.swing * swing; break;
        case detail::Limb::kRightLeg: local.z() -= tj.swing * swing; break;
        case detail::Limb::kLeftArm: local.z() -= tj.swing * swing; break;
        case detail::Limb::kRightArm: local.z() += tj.swing * swing; break;
        case detail::Limb::kNone: break;
      }
      const Eigen::Vector3d world(root.x() + c * local.x() + s * local.z(), root.y() + local.y(),
                                  root.z() - s * local.x() + c * local.z());
      m.set_joint(f, j, world);
    }
  }
  return m;
}

/// Root track for one behavior; throws PathFailure when no collision-free
/// track is found.
inline RootTrack generate_track(const GeneratedScene& scene, const BehaviorSpec& spec, int frames, double fps,
                                RngHandle& rng) {
  spec.validate();
  constexpr int kMaxTries = 1000;
  const double lo_x = detail::kWallMargin, hi_x = scene.extents.x() - detail::kWallMargin;
  const double lo_z = detail::kWallMargin, hi_z = scene.extents.z() - detail::kWallMargin;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const double speed = rng.uniform(spec.speed_min, spec.speed_max);
    const double step = speed / fps;
    const Eigen::Vector2d start(rng.uniform(lo_x, hi_x), rng.uniform(lo_z, hi_z));
    const double heading = rng.uniform(-M_PI, M_PI);
    RootTrack t;
    switch (spec.kind) {
      case BehaviorKind::kIdle: {
        t = detail::straight_track(start, heading, 0.0, frames);
        detail::finish_track(t, 0.0);
        break;
      }
      case BehaviorKind::kWalkStraight: {
        t = detail::straight_track(start, heading, step, frames);
        detail::finish_track(t, speed);
        break;
      }
      case BehaviorKind::kWalkTurn: {
        const int turn_at = static_cast<int>(rng.uniform_int(1, std::max(1, frames - 4)));
        const double rate = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.15, 0.35);
        Eigen::Vector2d p = start;
        double h = heading;
        for (int f = 0; f < frames; ++f) {
          if (f > 0) {
            if (f > turn_at) h += rate;
            p += step * detail::direction(h);
          }
          t.xz.push_back(p);
          t.heading.push_back(h);
        }
        detail::finish_track(t, speed);
        break;
      }
      case BehaviorKind::kCircleObstacle: {
        Eigen::Vector2d center(rng.uniform(lo_x, hi_x), rng.uniform(lo_z, hi_z));
        double radius = rng.uniform(0.6, 1.2);
        if (!scene.obstacles.empty()) {
          const auto& ob = scene.obstacles[rng.uniform_int(0, static_cast<std::int64_t>(scene.obstacles.size()) - 1)];
          center = ob.footprint_center();
          radius = 0.5 * std::hypot(ob.size.x(), ob.size.z()) + detail::kGenerationClearance + rng.uniform(0.05, 0.5);
        }
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double a0 = rng.uniform(-M_PI, M_PI);
        const double dtheta = sign * step / radius;
        for (int f = 0; f < frames; ++f) {
          const double a = a0 + dtheta * f;
          t.xz.emplace_back(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a));
          // Tangent of the circle in the direction of travel.
          const Eigen::Vector2d tangent = sign * Eigen::Vector2d(-std::sin(a), std::cos(a));
          t.heading.push_back(std::atan2(tangent.x(), tangent.y()));
        }
        detail::finish_track(t, speed);
        break;
      }
      case BehaviorKind::kApproachAndSit: {
        if (scene.obstacles.empty()) throw Error(ErrorCode::kPathFailure, "approach_and_sit needs an obstacle");
        const auto& ob = scene.obstacles[rng.uniform_int(0, static_cast<std::int64_t>(scene.obstacles.size()) - 1)];
        // Seat target: outside the middle of a random footprint side.
        const int side = static_cast<int>(rng.uniform_int(0, 3));
        const Eigen::Vector2d c = ob.footprint_center();
        const double off = detail::kGenerationClearance + 0.1;
        Eigen::Vector2d target = c, outward;
        switch (side) {
          case 0: target.x() = ob.min_corner.x() - off; outward = {-1, 0}; break;
          case 1: target.x() = ob.min_corner.x() + ob.size.x() + off; outward = {1, 0}; break;
          case 2: target.y() = ob.min_corner.z() - off; outward = {0, -1}; break;
          default: target.y() = ob.min_corner.z() + ob.size.z() + off; outward = {0, 1}; break;
        }
        const int walk_frames = static_cast<int>(rng.uniform_int(std::max(2, frames / 2), std::max(2, frames - 3)));
        const double spread = rng.uniform(-0.6, 0.6);
        const Eigen::Vector2d dir_in(-(std::cos(spread) * outward.x() - std::sin(spread) * outward.y()),
                                     -(std::sin(spread) * outward.x() + std::cos(spread) * outward.y()));
        const double path_len = step * walk_frames * 0.75;  // eases to a stop
        const Eigen::Vector2d from = target - path_len * dir_in;
        const double face = std::atan2(dir_in.x(), dir_in.y());
        for (int f = 0; f < frames; ++f) {
          const double u = std::min(1.0, static_cast<double>(f) / walk_frames);
          const double ease = u * (2.0 - u);  // decelerating
          t.xz.push_back(from + ease * (target - from));
          t.heading.push_back(face);
        }
        detail::finish_track(t, speed);
        for (int f = 0; f < frames; ++f) {
          const double after = static_cast<double>(f - walk_frames);
          t.sit_amount[f] = std::clamp(after / 3.0, 0.0, 1.0);
          if (f >= walk_frames) t.gait_amount[f] = 0.0;
        }
        break;
      }
    }
    if (detail::track_is_free(t, scene)) return t;
  }
  throw Error(ErrorCode::kPathFailure, "no collision-free " + to_string(spec.kind) + " path in " +
                                           std::to_string(kMaxTries) + " tries");
}

inline Sample generate_motion(const GeneratedScene& scene, const BehaviorSpec& spec, const SkeletonSpec& skeleton,
                              int history_frames, int future_frames, RngHandle rng, double fps = 5.0) {
  if (history_frames < 1 || future_frames < 1) throw Error(ErrorCode::kBadConfig, "need T, dT >= 1");
  const RootTrack track = generate_track(scene, spec, history_frames + future_frames, fps, rng);
  const MotionSequence all = pose_track(track, skeleton, fps);
  Sample s;
  s.scene = scene.cloud;
  s.history.frames = all.frames.topRows(history_frames);
  s.history.fps = fps;
  s.future.frames = all.frames.bottomRows(future_frames);
  s.future.fps = fps;
  s.meta.behavior = to_string(spec.kind);
  s.meta.seed = static_cast<std::int64_t>(rng.seed());
  return s;
}

struct DatasetSpec {
  int count = 256;
  std::uint64_t seed = 0;
  int history_frames = 5;
  int future_frames = 10;
  double fps = 5.0;
  double room_min = 3.5;  // floor side range, meters
  double room_max = 5.0;
  double room_height = 3.0;
  int obstacles_min = 1;
  int obstacles_max = 3;
  double points_per_m2 = 25.0;
};

/// Sample i draws from stream i of the dataset seed; a failed placement or
/// path moves to the next stream block, so the result is deterministic.
inline std::vector<Sample> generate_dataset(const DatasetSpec& spec, const SkeletonSpec& skeleton) {
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    for (int attempt = 0;; ++attempt) {
      RngHandle rng(spec.seed, static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(attempt) * 1000003ULL);
      RoomSpec room;
      room.extents = {rng.uniform(spec.room_min, spec.room_max), spec.room_height,
                      rng.uniform(spec.room_min, spec.room_max)};
      room.obstacle_count = static_cast<int>(rng.uniform_int(spec.obstacles_min, spec.obstacles_max));
      room.points_per_m2 = spec.points_per_m2;
      BehaviorSpec behavior;
      behavior.kind = all_behaviors()[rng.uniform_int(0, static_cast<std::int64_t>(all_behaviors().size()) - 1)];
      if (behavior.kind == BehaviorKind::kIdle) behavior.speed_min = behavior.speed_max = 0.0;
      try {
        GeneratedScene scene = generate_scene(room, rng.derive(1));
        Sample s = generate_motion(scene, behavior, skeleton, spec.history_frames, spec.future_frames, rng.derive(2),
                                   spec.fps);
        s.meta.seed = static_cast<std::int64_t>(spec.seed) * 1000 + i;
        out.push_back(std::move(s));
        break;
      } catch (const Error& e) {
        if (attempt > 50) throw;
      }
    }
  }
  return out;
}

}  // namespace mcld
