#pragma once

// Key region proposal: regress an axis-aligned box from the motion history,
// mask the scene with it and subsample the points inside.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/domain.hpp"
#include "mcld/error.hpp"
#include "mcld/nn.hpp"
#include "mcld/rng.hpp"

namespace mcld {

struct KeyRegionBox {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // minimum corner
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();     // length, height, width along x, y, z

  double volume() const { return dims.prod(); }

  /// Closed-interval containment test.
  bool contains(const Eigen::Vector3d& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < origin[a] || p[a] > origin[a] + dims[a]) return false;
    return true;
  }
};

struct KrpConfig {
  int layers = 3;
  int heads = 4;
  int width = 128;
  int ff_width = 256;
  int hidden = 128;
  double soft_tau = 0.1;
  double min_dim = 0.5;
  double max_volume_ratio = 10.0;  // box volume bound relative to the scene bounding box

  void validate() const {
    if (layers <= 0 || heads <= 0 || width <= 0 || ff_width <= 0 || hidden <= 0 || !(soft_tau > 0) || !(min_dim > 0))
      throw Error(ErrorCode::kBadConfig, "krp: sizes and temperature must be positive");
    if (width % heads != 0) throw Error(ErrorCode::kBadConfig, "krp: width must be divisible by heads");
  }
};

template <typename T>
struct KrpModel {
  KrpConfig cfg;
  int frames = 0;
  int joints = 0;
  int root_index = 0;
  LinearParams frame_embed;
  std::vector<TransformerLayerParams> layers;
  LinearParams hidden;
  LinearParams head;
};

template <typename T>
KrpModel<T> make_krp(ParamStore<T>& store, const KrpConfig& cfg, int frames, int joints, int root_index, RngHandle rng,
                     const std::string& prefix = "krp") {
  cfg.validate();
  KrpModel<T> m;
  m.cfg = cfg;
  m.frames = frames;
  m.joints = joints;
  m.root_index = root_index;
  m.frame_embed = make_linear(store, prefix + ".frame_embed", 3 * joints, cfg.width, rng);
  m.layers = make_stack(store, prefix, cfg.layers, cfg.width, cfg.heads, cfg.ff_width, rng);
  m.hidden = make_linear(store, prefix + ".hidden", cfg.width, cfg.hidden, rng);
  m.head = make_linear(store, prefix + ".head", cfg.hidden, 6, rng);
  // Start from a box around the body that reaches the floor: origin offset
  // (-1.25, -1.5, -1.25) from the root, extents about 2.5 m.
  store.value(m.head.weight) *= static_cast<T>(0.1);
  const double start_dims[3] = {2.5, 2.5, 2.5};
  const double start_offset[3] = {-1.25, -1.5, -1.25};
  for (int a = 0; a < 3; ++a) {
    const double sp = std::max(start_dims[a] - cfg.min_dim, 1e-3);
    store.value(m.head.bias)(0, a) = static_cast<T>(start_offset[a]);
    store.value(m.head.bias)(0, 3 + a) = static_cast<T>(std::log(std::expm1(sp)));
  }
  return m;
}

namespace detail {

inline double scene_bbox_volume(const ScenePointCloud& scene) {
  if (scene.size() == 0) return 0.0;
  Eigen::Vector3d lo = scene.points.colwise().minCoeff().transpose();
  Eigen::Vector3d hi = scene.points.colwise().maxCoeff().transpose();
  return (hi - lo).prod();
}

/// Uniform scale that brings `dims` under the volume bound (1 when already inside).
inline double volume_clamp_scale(const Eigen::Vector3d& dims, double bound) {
  const double vol = dims.prod();
  if (!(bound > 0) || vol <= bound) return 1.0;
  return std::cbrt(bound / vol);
}

}  // namespace detail

/// Differentiable proposal. Returns a 1 x 6 row (origin xyz, dims xyz).
/// The network sees the history relative to the last-frame root, and the
/// origin is that root plus a regressed offset, so translating the history
/// translates the origin.
template <typename T>
Var<T> propose_region_var(const Net<T>& net, const KrpModel<T>& m, const MotionSequence& history,
                          double volume_bound = 0.0) {
  require_shape(history.frame_count() == m.frames && history.joint_count() == m.joints,
                "propose_region: history shape does not match the model");
  const Eigen::Vector3d root = history.joint(history.frame_count() - 1, m.root_index);
  RowMatrixXd rel = history.frames;
  for (int f = 0; f < rel.rows(); ++f)
    for (int j = 0; j < m.joints; ++j)
      for (int c = 0; c < 3; ++c) rel(f, 3 * j + c) -= root[c];

  Var<T> x = ag::add(linear(net, m.frame_embed, net.constant(rel.cast<T>())),
                     net.constant(sinusoidal_table<T>(m.frames, m.cfg.width)));
  x = self_attention_stack(net, m.layers, x);
  Var<T> raw = linear(net, m.head, ag::relu(linear(net, m.hidden, ag::mean_rows(x))));

  Mat<T> root_row(1, 3);
  for (int c = 0; c < 3; ++c) root_row(0, c) = static_cast<T>(root[c]);
  Var<T> origin = ag::add(net.constant(root_row), ag::slice_cols(raw, 0, 3));
  Var<T> dims = ag::add(ag::softplus(ag::slice_cols(raw, 3, 3)),
                        net.constant(Mat<T>::Constant(1, 3, static_cast<T>(m.cfg.min_dim))));
  const Eigen::Vector3d dims_value = dims.value().row(0).transpose().template cast<double>();
  const double s = detail::volume_clamp_scale(dims_value, volume_bound);
  if (s < 1.0) {
    dims = ag::scale(dims, static_cast<T>(s));
    dims = ag::add(ag::relu(ag::sub(dims, net.constant(Mat<T>::Constant(1, 3, static_cast<T>(m.cfg.min_dim))))),
                   net.constant(Mat<T>::Constant(1, 3, static_cast<T>(m.cfg.min_dim))));
  }
  return ag::concat_cols<T>({origin, dims});
}

inline KeyRegionBox box_from_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  KeyRegionBox b;
  b.origin = row.head(3).transpose();
  b.dims = row.tail(3).transpose();
  return b;
}

/// Inference-time proposal. When `scene` is given, the box volume is bounded
/// by max_volume_ratio times the scene bounding-box volume.
template <typename T>
KeyRegionBox propose_region(const ParamStore<T>& params, const KrpModel<T>& m, const MotionSequence& history,
                            const ScenePointCloud* scene = nullptr) {
  Tape<T> tape(false);
  Net<T> net{tape, params};
  const double bound = scene ? m.cfg.max_volume_ratio * detail::scene_bbox_volume(*scene) : 0.0;
  Var<T> row = propose_region_var(net, m, history, bound);
  return box_from_row(row.value().row(0).template cast<double>());
}

enum class MaskMode { kHard, kSoft };

struct MaskedScene {
  RowMatrixXd points;       // S' = S (.) M
  Eigen::VectorXd weights;  // M
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double soft_box_weight(const Eigen::Vector3d& p, const KeyRegionBox& box, double tau) {
  double w = 1.0;
  for (int a = 0; a < 3; ++a)
    w *= logistic((p[a] - box.origin[a]) / tau) * logistic((box.origin[a] + box.dims[a] - p[a]) / tau);
  return w;
}

inline MaskedScene mask_scene(const ScenePointCloud& scene, const KeyRegionBox& box, MaskMode mode, double tau = 0.1) {
  MaskedScene out;
  out.points = scene.points;
  out.weights.resize(scene.size());
  for (int i = 0; i < scene.size(); ++i) {
    const Eigen::Vector3d p = scene.points.row(i).transpose();
    out.weights[i] = mode == MaskMode::kHard ? (box.contains(p) ? 1.0 : 0.0) : soft_box_weight(p, box, tau);
    out.points.row(i) *= out.weights[i];
  }
  return out;
}

/// Soft mask of fixed points against a differentiable 1 x 6 box row.
/// Returns n x 1 weights; gradients reach origin and dims.
template <typename T>
Var<T> soft_box_weights(Var<T> box, const Mat<T>& points, T tau) {
  require_shape(box.rows() == 1 && box.cols() == 6 && points.cols() == 3, "soft_box_weights: bad shapes");
  const Eigen::Index n = points.rows();
  const Mat<T>& b = box.value();
  Mat<T> w(n, 1);
  Mat<T> one_minus_lo(n, 3), one_minus_hi(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    T prod = T(1);
    for (int a = 0; a < 3; ++a) {
      const T lo = T(1) / (T(1) + std::exp(-(points(i, a) - b(0, a)) / tau));
      const T hi = T(1) / (T(1) + std::exp(-(b(0, a) + b(0, 3 + a) - points(i, a)) / tau));
      prod *= lo * hi;
      one_minus_lo(i, a) = T(1) - lo;
      one_minus_hi(i, a) = T(1) - hi;
    }
    w(i, 0) = prod;
  }
  Mat<T> wv = w;
  return box.tape->push(std::move(w), {box}, [box, wv, one_minus_lo, one_minus_hi, tau](Tape<T>& t, const Mat<T>& g) {
    Mat<T> gb = Mat<T>::Zero(1, 6);
    for (Eigen::Index i = 0; i < wv.rows(); ++i) {
      const T gw = g(i, 0) * wv(i, 0) / tau;
      for (int a = 0; a < 3; ++a) {
        gb(0, a) += gw * (one_minus_hi(i, a) - one_minus_lo(i, a));
        gb(0, 3 + a) += gw * one_minus_hi(i, a);
      }
    }
    t.accumulate(box, gb);
  });
}

/// Indices of points with weight > 0.5, drawn uniformly without replacement
/// down to n_target. With fewer candidates every candidate appears once and
/// the remainder is drawn with replacement.
inline std::vector<int> select_region_indices(const Eigen::VectorXd& weights, int n_target, RngHandle& rng) {
  if (n_target < 1) throw Error(ErrorCode::kBadConfig, "subsample: n_target must be >= 1");
  std::vector<int> candidates;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.5) candidates.push_back(static_cast<int>(i));
  if (candidates.empty()) throw Error(ErrorCode::kEmptyRegion, "no scene point inside the key region");
  const int m = static_cast<int>(candidates.size());
  std::vector<int> out;
  out.reserve(n_target);
  if (m >= n_target) {
    for (int i = 0; i < n_target; ++i) {
      const int j = static_cast<int>(rng.uniform_int(i, m - 1));
      std::swap(candidates[i], candidates[j]);
    }
    out.assign(candidates.begin(), candidates.begin() + n_target);
  } else {
    out = candidates;
    while (static_cast<int>(out.size()) < n_target) out.push_back(candidates[rng.uniform_int(0, m - 1)]);
  }
  return out;
}

inline ScenePointCloud gather_points(const RowMatrixXd& points, const std::vector<int>& idx) {
  ScenePointCloud out;
  out.points.resize(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.points.row(static_cast<Eigen::Index>(i)) = points.row(idx[i]);
  return out;
}

inline ScenePointCloud subsample_region(const RowMatrixXd& masked_points, const Eigen::VectorXd& weights, int n_target,
                                        RngHandle& rng) {
  return gather_points(masked_points, select_region_indices(weights, n_target, rng));
}

/// Whole-scene sampling used when the region is empty or proposal is disabled.
inline ScenePointCloud subsample_scene(const ScenePointCloud& scene, int n_target, RngHandle& rng) {
  return subsample_region(scene.points, Eigen::VectorXd::Ones(scene.size()), n_target, rng);
}

}  // namespace mcld
