#pragma once

// Static top-down (x-z) SVG overlays: scene points grey, history blue,
// predictions orange, ground truth green. One image per future frame, one
// trajectory image, and a JSON file with the plotted coordinates.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mcld/domain.hpp"
#include "mcld/error.hpp"

namespace mcld {

struct VizOptions {
  int pixels = 640;
  bool show_ground_truth = true;
  int max_scene_points = 4000;
};

namespace detail {

struct TopDown {
  double min_x = 0, min_z = 0, scale = 1;
  int pixels = 640;

  double px(double x) const { return 20.0 + (x - min_x) * scale; }
  double pz(double z) const { return 20.0 + (z - min_z) * scale; }
};

inline TopDown fit_view(const ScenePointCloud& scene, const std::vector<const MotionSequence*>& motions, int pixels) {
  double lo_x = 1e300, lo_z = 1e300, hi_x = -1e300, hi_z = -1e300;
  auto grow = [&](double x, double z) {
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_z = std::min(lo_z, z);
    hi_z = std::max(hi_z, z);
  };
  for (int i = 0; i < scene.size(); ++i) grow(scene.points(i, 0), scene.points(i, 2));
  for (const auto* m : motions)
    for (int f = 0; f < m->frame_count(); ++f)
      for (int j = 0; j < m->joint_count(); ++j) grow(m->frames(f, 3 * j), m->frames(f, 3 * j + 2));
  if (lo_x > hi_x) lo_x = hi_x = lo_z = hi_z = 0.0;
  TopDown v;
  v.pixels = pixels;
  v.min_x = lo_x;
  v.min_z = lo_z;
  const double span = std::max({hi_x - lo_x, hi_z - lo_z, 1e-3});
  v.scale = (pixels - 40) / span;
  return v;
}

inline std::string num(double v) {
  std::ostringstream s;
  s.precision(5);
  s << v;
  return s.str();
}

inline void svg_pose(std::ostringstream& out, const TopDown& v, const MotionSequence& m, int f,
                     const SkeletonSpec& skeleton, const char* color, double opacity) {
  for (const auto& [a, b] : skeleton.bone_edges) {
    out << "<line x1=\"" << num(v.px(m.frames(f, 3 * a))) << "\" y1=\"" << num(v.pz(m.frames(f, 3 * a + 2)))
        << "\" x2=\"" << num(v.px(m.frames(f, 3 * b))) << "\" y2=\"" << num(v.pz(m.frames(f, 3 * b + 2)))
        << "\" stroke=\"" << color << "\" stroke-width=\"2\" stroke-opacity=\"" << opacity << "\"/>\n";
  }
}

inline void svg_path(std::ostringstream& out, const TopDown& v, const MotionSequence& m, int root, const char* color,
                     const Eigen::Vector3d* from = nullptr) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  if (from) out << num(v.px(from->x())) << "," << num(v.pz(from->z())) << " ";
  for (int f = 0; f < m.frame_count(); ++f)
    out << num(v.px(m.frames(f, 3 * root))) << "," << num(v.pz(m.frames(f, 3 * root + 2))) << " ";
  out << "\"/>\n";
}

inline std::string svg_open(const TopDown& v, const ScenePointCloud& scene, int max_points) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << v.pixels << "\" height=\"" << v.pixels << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const int stride = std::max(1, scene.size() / std::max(1, max_points));
  for (int i = 0; i < scene.size(); i += stride)
    out << "<circle cx=\"" << num(v.px(scene.points(i, 0))) << "\" cy=\"" << num(v.pz(scene.points(i, 2)))
        << "\" r=\"1.5\" fill=\"#999999\"/>\n";
  return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "write to '" + path + "' failed");
}

inline void json_motion(std::string& out, const MotionSequence& m) {
  out.push_back('[');
  for (int f = 0; f < m.frame_count(); ++f) {
    if (f) out.push_back(',');
    out.push_back('[');
    for (int j = 0; j < m.joint_count(); ++j) {
      if (j) out.push_back(',');
      out.push_back('[');
      for (int c = 0; c < 3; ++c) {
        if (c) out.push_back(',');
        char buf[32];
        auto r = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(m.frames(f, 3 * j + c)));
        out.append(buf, r.ptr);
      }
      out.push_back(']');
    }
    out.push_back(']');
  }
  out.push_back(']');
}

}  // namespace detail

/// Writes the images and the coordinate JSON; returns the written paths.
/// `ground_truth` may be empty (zero frames).
inline std::vector<std::string> export_viz(const MotionSequence& history, const ScenePointCloud& scene,
                                           const MotionSequence& ground_truth,
                                           const std::vector<MotionSequence>& predictions, const SkeletonSpec& skeleton,
                                           const std::string& out_dir, const VizOptions& opt = {}) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create '" + out_dir + "': " + ec.message());
  const bool with_gt = opt.show_ground_truth && ground_truth.frame_count() > 0;
  std::vector<const MotionSequence*> all{&history};
  if (with_gt) all.push_back(&ground_truth);
  for (const auto& p : predictions) all.push_back(&p);
  const detail::TopDown view = detail::fit_view(scene, all, opt.pixels);
  const std::string background = detail::svg_open(view, scene, opt.max_scene_points);
  const int root = skeleton.root_index;
  const Eigen::Vector3d last_root = history.joint(history.frame_count() - 1, root);

  std::vector<std::string> files;
  const int frames = predictions.empty() ? 0 : predictions.front().frame_count();
  for (int f = 0; f < frames; ++f) {
    std::ostringstream svg;
    svg << background;
    detail::svg_pose(svg, view, history, history.frame_count() - 1, skeleton, "#1f77b4", 0.4);
    if (with_gt && f < ground_truth.frame_count()) detail::svg_pose(svg, view, ground_truth, f, skeleton, "#2ca02c", 0.8);
    for (const auto& p : predictions) detail::svg_pose(svg, view, p, f, skeleton, "#ff7f0e", 0.8);
    svg << "</svg>\n";
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.svg", f);
    files.push_back(out_dir + "/" + name);
    detail::write_text(files.back(), svg.str());
  }

  std::ostringstream traj;
  traj << background;
  detail::svg_path(traj, view, history, root, "#1f77b4");
  for (int f = 0; f < history.frame_count(); ++f) detail::svg_pose(traj, view, history, f, skeleton, "#1f77b4", 0.25);
  if (with_gt) detail::svg_path(traj, view, ground_truth, root, "#2ca02c", &last_root);
  for (const auto& p : predictions) detail::svg_path(traj, view, p, root, "#ff7f0e", &last_root);
  traj << "</svg>\n";
  files.push_back(out_dir + "/trajectory.svg");
  detail::write_text(files.back(), traj.str());

  std::string json = "{\"root_index\":" + std::to_string(root) + ",\"history\":";
  detail::json_motion(json, history);
  json += ",\"ground_truth\":";
  if (with_gt) detail::json_motion(json, ground_truth);
  else json += "[]";
  json += ",\"predictions\":[";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (i) json += ",";
    detail::json_motion(json, predictions[i]);
  }
  json += "]}\n";
  files.push_back(out_dir + "/viz.json");
  detail::write_text(files.back(), json);
  return files;
}

}  // namespace mcld
