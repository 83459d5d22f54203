#pragma once

// JSON-lines dataset files. Each line holds one sample:
//   {"scene": [[x,y,z],...], "history": [[[x,y,z],...],...], "future": ...,
//    "fps": 5, "meta": {"behavior": "...", "seed": 7}}
// Coordinates are stored at float32 precision. The skeleton lives in a
// sidecar "<path>.header.json".

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcld/domain.hpp"
#include "mcld/error.hpp"

namespace mcld {

inline constexpr int kDatasetFormatVersion = 1;

inline std::string dataset_header_path(const std::string& path) { return path + ".header.json"; }

namespace detail {

inline void append_float(std::string& out, double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::kSchemaViolation, "refusing to write a non-finite coordinate");
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(v));
  out.append(buf, res.ptr);
}

inline void append_point(std::string& out, const double* p) {
  out.push_back('[');
  for (int c = 0; c < 3; ++c) {
    if (c) out.push_back(',');
    append_float(out, p[c]);
  }
  out.push_back(']');
}

inline void append_motion(std::string& out, const MotionSequence& m) {
  out.push_back('[');
  for (int f = 0; f < m.frame_count(); ++f) {
    if (f) out.push_back(',');
    out.push_back('[');
    for (int j = 0; j < m.joint_count(); ++j) {
      if (j) out.push_back(',');
      append_point(out, &m.frames(f, 3 * j));
    }
    out.push_back(']');
  }
  out.push_back(']');
}

[[noreturn]] inline void schema_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, "line " + std::to_string(line) + ": " + what);
}

inline double read_coord(const nlohmann::json& v, std::size_t line) {
  if (!v.is_number()) schema_error(line, "coordinate is not a number");
  const double d = static_cast<double>(static_cast<float>(v.get<double>()));
  if (!std::isfinite(d)) schema_error(line, "coordinate is not finite");
  return d;
}

inline void read_point(const nlohmann::json& v, double* out, std::size_t line) {
  if (!v.is_array() || v.size() != 3) schema_error(line, "point must be [x, y, z]");
  for (int c = 0; c < 3; ++c) out[c] = read_coord(v[c], line);
}

inline MotionSequence read_motion(const nlohmann::json& v, double fps, const char* key, std::size_t line) {
  if (!v.is_array() || v.empty()) schema_error(line, std::string(key) + " must be a non-empty array of frames");
  if (!v[0].is_array() || v[0].empty()) schema_error(line, std::string(key) + " frame 0 has no joints");
  const int frames = static_cast<int>(v.size());
  const int joints = static_cast<int>(v[0].size());
  MotionSequence m(frames, joints, fps);
  for (int f = 0; f < frames; ++f) {
    if (!v[f].is_array() || static_cast<int>(v[f].size()) != joints)
      schema_error(line, std::string(key) + " frame " + std::to_string(f) + " has a different joint count");
    for (int j = 0; j < joints; ++j) read_point(v[f][j], &m.frames(f, 3 * j), line);
  }
  return m;
}

}  // namespace detail

inline std::string sample_to_line(const Sample& s) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.scene.size()) * 30 + 4096);
  out += "{\"scene\":[";
  for (int i = 0; i < s.scene.size(); ++i) {
    if (i) out.push_back(',');
    detail::append_point(out, &s.scene.points(i, 0));
  }
  out += "],\"history\":";
  detail::append_motion(out, s.history);
  out += ",\"future\":";
  detail::append_motion(out, s.future);
  out += ",\"fps\":";
  out += nlohmann::json(s.history.fps).dump();
  out += ",\"meta\":";
  out += nlohmann::json{{"behavior", s.meta.behavior}, {"seed", s.meta.seed}}.dump();
  out += "}";
  return out;
}

inline Sample sample_from_line(const std::string& text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    detail::schema_error(line, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) detail::schema_error(line, "sample must be an object");
  for (const char* key : {"scene", "history", "future", "fps"})
    if (!j.contains(key)) detail::schema_error(line, std::string("missing key '") + key + "'");
  if (!j["fps"].is_number() || !(j["fps"].get<double>() > 0)) detail::schema_error(line, "fps must be positive");
  const double fps = j["fps"].get<double>();
  Sample s;
  const auto& scene = j["scene"];
  if (!scene.is_array()) detail::schema_error(line, "scene must be an array of points");
  s.scene.points.resize(static_cast<Eigen::Index>(scene.size()), 3);
  for (std::size_t i = 0; i < scene.size(); ++i)
    detail::read_point(scene[i], &s.scene.points(static_cast<Eigen::Index>(i), 0), line);
  s.history = detail::read_motion(j["history"], fps, "history", line);
  s.future = detail::read_motion(j["future"], fps, "future", line);
  if (s.history.joint_count() != s.future.joint_count()) detail::schema_error(line, "history and future joint counts differ");
  if (j.contains("meta")) {
    const auto& meta = j["meta"];
    if (!meta.is_object()) detail::schema_error(line, "meta must be an object");
    if (meta.contains("behavior")) {
      if (!meta["behavior"].is_string()) detail::schema_error(line, "meta.behavior must be a string");
      s.meta.behavior = meta["behavior"].get<std::string>();
    }
    if (meta.contains("seed")) {
      if (!meta["seed"].is_number_integer()) detail::schema_error(line, "meta.seed must be an integer");
      s.meta.seed = meta["seed"].get<std::int64_t>();
    }
  }
  return s;
}

inline nlohmann::json skeleton_to_json(const SkeletonSpec& spec) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : spec.bone_edges) edges.push_back({a, b});
  return {{"joint_count", spec.joint_count},
          {"joint_names", spec.joint_names},
          {"root_index", spec.root_index},
          {"bone_edges", edges}};
}

inline SkeletonSpec skeleton_from_json(const nlohmann::json& j) {
  SkeletonSpec spec;
  try {
    spec.joint_count = j.at("joint_count").get<int>();
    spec.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    spec.root_index = j.at("root_index").get<int>();
    for (const auto& e : j.at("bone_edges")) spec.bone_edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("skeleton header: ") + e.what());
  }
  const ValidationReport r = validate_skeleton(spec);
  if (!r.ok()) throw Error(ErrorCode::kSchemaViolation, "skeleton header: " + r.issues.front());
  return spec;
}

/// Writes the samples and the sidecar header. Returns the sample count.
inline std::size_t write_dataset(const std::vector<Sample>& samples, const std::string& path,
                                 const SkeletonSpec& skeleton) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  for (const auto& s : samples) out << sample_to_line(s) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIoFailure, "write to '" + path + "' failed");

  const std::string header_path = dataset_header_path(path);
  std::ofstream header(header_path, std::ios::binary | std::ios::trunc);
  if (!header) throw Error(ErrorCode::kIoFailure, "cannot open '" + header_path + "' for writing");
  header << nlohmann::json{{"format", "mcld-dataset"}, {"version", kDatasetFormatVersion},
                           {"skeleton", skeleton_to_json(skeleton)}}
                .dump(2)
         << '\n';
  if (!header) throw Error(ErrorCode::kIoFailure, "write to '" + header_path + "' failed");
  return samples.size();
}

inline std::vector<Sample> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open '" + path + "'");
  std::vector<Sample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(sample_from_line(text, line));
  }
  if (in.bad()) throw Error(ErrorCode::kIoFailure, "read from '" + path + "' failed");
  return out;
}

inline SkeletonSpec read_skeleton(const std::string& dataset_path) {
  const std::string path = dataset_header_path(dataset_path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open dataset header '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, "dataset header: " + std::string(e.what()));
  }
  if (!j.contains("version") || j["version"] != kDatasetFormatVersion)
    throw Error(ErrorCode::kSchemaViolation, "dataset header: unsupported version");
  return skeleton_from_json(j.at("skeleton"));
}

}  // namespace mcld
