#pragma once

// Binary checkpoint container:
//   "MCLDCKPT" | u32 version | u64 header bytes | JSON header | payload
// The payload holds float32 tensors followed by the float64 schedule. The
// header indexes every tensor by name, shape and byte offset.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcld/autograd.hpp"
#include "mcld/diffusion.hpp"
#include "mcld/error.hpp"
#include "mcld/nn.hpp"
#include "mcld/optim.hpp"

namespace mcld {

inline constexpr char kCheckpointMagic[8] = {'M', 'C', 'L', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string stage;  // "vae" or "diffusion"
  long step = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json skeleton = nlohmann::json::object();
  std::vector<NamedTensor> params;
  long optimizer_step = 0;
  std::vector<NamedTensor> adam_m;
  std::vector<NamedTensor> adam_v;
  std::vector<double> schedule_alpha;  // empty for the first stage

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : params)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <typename T>
NamedTensor to_tensor(const std::string& name, const Mat<T>& m) {
  NamedTensor t{name, static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[i] = static_cast<float>(m.data()[i]);
  return t;
}

template <typename T>
void from_tensor(const NamedTensor& t, Mat<T>& m) {
  if (t.rows != m.rows() || t.cols != m.cols())
    throw Error(ErrorCode::kBadCheckpoint, "tensor '" + t.name + "' has shape " + std::to_string(t.rows) + "x" +
                                               std::to_string(t.cols) + ", model expects " + std::to_string(m.rows()) +
                                               "x" + std::to_string(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(t.data[i]);
}

inline bool has_prefix(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

template <typename V>
void put(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(V));
}

}  // namespace detail

/// Parameters (and optionally AdamW moments) whose names start with `prefix`.
template <typename T>
void capture_params(Checkpoint& ck, const ParamStore<T>& store, const std::string& prefix = "",
                    const AdamW<T>* opt = nullptr) {
  ck.params.clear();
  ck.adam_m.clear();
  ck.adam_v.clear();
  for (int i = 0; i < store.size(); ++i) {
    if (!detail::has_prefix(store.name(i), prefix)) continue;
    ck.params.push_back(detail::to_tensor(store.name(i), store.value(i)));
    if (opt) {
      ck.adam_m.push_back(detail::to_tensor(store.name(i), opt->first_moment()[i]));
      ck.adam_v.push_back(detail::to_tensor(store.name(i), opt->second_moment()[i]));
    }
  }
  ck.optimizer_step = opt ? opt->step_count() : 0;
}

/// Copies every store parameter under `prefix` from the checkpoint. Missing
/// or misshapen tensors raise BadCheckpoint.
template <typename T>
void restore_params(const Checkpoint& ck, ParamStore<T>& store, const std::string& prefix = "",
                    AdamW<T>* opt = nullptr) {
  for (int i = 0; i < store.size(); ++i) {
    if (!detail::has_prefix(store.name(i), prefix)) continue;
    bool found = false;
    for (std::size_t t = 0; t < ck.params.size(); ++t) {
      if (ck.params[t].name != store.name(i)) continue;
      detail::from_tensor(ck.params[t], store.value(i));
      if (opt && t < ck.adam_m.size()) {
        detail::from_tensor(ck.adam_m[t], opt->first_moment()[i]);
        detail::from_tensor(ck.adam_v[t], opt->second_moment()[i]);
      }
      found = true;
      break;
    }
    if (!found) throw Error(ErrorCode::kBadCheckpoint, "checkpoint lacks parameter '" + store.name(i) + "'");
  }
  if (opt) opt->set_step_count(ck.optimizer_step);
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["version"] = ck.version;
  header["stage"] = ck.stage;
  header["step"] = ck.step;
  header["config"] = ck.config;
  header["skeleton"] = ck.skeleton;
  header["optimizer_step"] = ck.optimizer_step;
  std::string payload;
  nlohmann::json index = nlohmann::json::array();
  auto emit = [&](const std::vector<NamedTensor>& group, const char* kind) {
    for (const auto& t : group) {
      for (float v : t.data)
        if (!std::isfinite(v)) throw Error(ErrorCode::kBadCheckpoint, "tensor '" + t.name + "' is not finite");
      index.push_back({{"group", kind}, {"name", t.name}, {"rows", t.rows}, {"cols", t.cols},
                       {"offset", payload.size()}});
      payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    }
  };
  emit(ck.params, "param");
  emit(ck.adam_m, "adam_m");
  emit(ck.adam_v, "adam_v");
  header["tensors"] = index;
  header["schedule"] = {{"steps", ck.schedule_alpha.size()}, {"offset", payload.size()}, {"dtype", "f64"}};
  payload.append(reinterpret_cast<const char*>(ck.schedule_alpha.data()), ck.schedule_alpha.size() * sizeof(double));

  const std::string text = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put(out, ck.version);
  detail::put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::kBadCheckpoint, "checkpoint: " + what); };
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw bad("missing magic tag");
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&header_len, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) throw bad("unsupported version " + std::to_string(version));
  if (header_len > bytes.size() - 20) throw bad("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("header is not JSON: ") + e.what());
  }
  const std::size_t base = 20 + header_len;
  const std::size_t payload = bytes.size() - base;
  Checkpoint ck;
  try {
    ck.version = version;
    ck.stage = header.at("stage").get<std::string>();
    ck.step = header.at("step").get<long>();
    ck.config = header.at("config");
    ck.skeleton = header.at("skeleton");
    ck.optimizer_step = header.at("optimizer_step").get<long>();
    for (const auto& e : header.at("tensors")) {
      NamedTensor t{e.at("name").get<std::string>(), e.at("rows").get<int>(), e.at("cols").get<int>(), {}};
      const std::size_t off = e.at("offset").get<std::size_t>();
      if (t.rows < 0 || t.cols < 0) throw bad("negative shape for '" + t.name + "'");
      const std::size_t n = static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols);
      if (off > payload || n * sizeof(float) > payload - off) throw bad("tensor '" + t.name + "' is out of bounds");
      t.data.resize(n);
      std::memcpy(t.data.data(), bytes.data() + base + off, n * sizeof(float));
      for (float v : t.data)
        if (!std::isfinite(v)) throw bad("tensor '" + t.name + "' is not finite");
      const std::string group = e.at("group").get<std::string>();
      if (group == "param") ck.params.push_back(std::move(t));
      else if (group == "adam_m") ck.adam_m.push_back(std::move(t));
      else if (group == "adam_v") ck.adam_v.push_back(std::move(t));
      else throw bad("unknown tensor group '" + group + "'");
    }
    const auto& sched = header.at("schedule");
    const std::size_t steps = sched.at("steps").get<std::size_t>();
    const std::size_t off = sched.at("offset").get<std::size_t>();
    if (off > payload || steps * sizeof(double) > payload - off) throw bad("schedule is out of bounds");
    ck.schedule_alpha.resize(steps);
    std::memcpy(ck.schedule_alpha.data(), bytes.data() + base + off, steps * sizeof(double));
  } catch (const nlohmann::json::exception& e) {
    throw bad(std::string("malformed header: ") + e.what());
  }
  if (!ck.adam_m.empty() && (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size()))
    throw bad("optimizer state does not match the parameter list");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

/// Rebuilds the schedule stored in a checkpoint.
inline DiffusionSchedule schedule_from_alpha(const std::vector<double>& alpha) {
  if (alpha.empty()) throw Error(ErrorCode::kBadCheckpoint, "checkpoint has no diffusion schedule");
  DiffusionSchedule s;
  s.steps = static_cast<int>(alpha.size());
  s.alpha = alpha;
  s.alpha_bar.resize(alpha.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0 && alpha[i] < 1.0)) throw Error(ErrorCode::kBadCheckpoint, "schedule alpha out of (0, 1)");
    prod *= alpha[i];
    s.alpha_bar[i] = prod;
  }
  s.beta_start = 1.0 - alpha.front();
  s.beta_end = 1.0 - alpha.back();
  return s;
}

}  // namespace mcld
