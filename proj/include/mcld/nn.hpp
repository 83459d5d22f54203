#pragma once

// Parameter storage and the transformer building blocks shared by the VAE,
// the region proposal network, the multi-attention encoder and the denoiser.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mcld/autograd.hpp"
#include "mcld/error.hpp"
#include "mcld/rng.hpp"

namespace mcld {

/// Named parameter matrices. Entries live in a deque so references handed
/// to tapes stay valid while further entries are added.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<T> value;
    bool trainable = true;
  };

  int add(const std::string& name, Mat<T> init, bool trainable = true) {
    if (index_.count(name)) throw Error(ErrorCode::kBadConfig, "duplicate parameter '" + name + "'");
    entries_.push_back({name, std::move(init), trainable});
    const int idx = static_cast<int>(entries_.size()) - 1;
    index_[name] = idx;
    return idx;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::kBadCheckpoint, "unknown parameter '" + name + "'");
    return it->second;
  }

  int size() const { return static_cast<int>(entries_.size()); }
  const Entry& entry(int i) const { return entries_[i]; }
  const Mat<T>& value(int i) const { return entries_[i].value; }
  Mat<T>& value(int i) { return entries_[i].value; }
  const std::string& name(int i) const { return entries_[i].name; }
  bool trainable(int i) const { return entries_[i].trainable; }

  /// Sets the trainable flag on every entry whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
  }

  Var<T> bind(Tape<T>& tape, int i) const { return tape.leaf(&entries_[i].value, i, entries_[i].trainable); }

  std::vector<Mat<T>> zero_grads() const {
    std::vector<Mat<T>> g;
    g.reserve(entries_.size());
    for (const auto& e : entries_) g.push_back(Mat<T>::Zero(e.value.rows(), e.value.cols()));
    return g;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  /// Same entries converted to another scalar type.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  /// FNV-1a over names and raw bytes of every entry with the prefix.
  std::uint64_t checksum(const std::string& prefix = "") const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const unsigned char* p, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& e : entries_) {
      if (e.name.rfind(prefix, 0) != 0) continue;
      feed(reinterpret_cast<const unsigned char*>(e.name.data()), e.name.size());
      feed(reinterpret_cast<const unsigned char*>(e.value.data()), sizeof(T) * static_cast<std::size_t>(e.value.size()));
    }
    return h;
  }

 private:
  std::deque<Entry> entries_;
  std::map<std::string, int> index_;
};

/// Optional observer of every attention matrix produced in a forward pass.
struct AttentionProbe {
  double max_row_sum_error = 0.0;
  std::size_t matrices = 0;
  std::size_t rows = 0;

  template <typename T>
  void observe(const Mat<T>& weights) {
    ++matrices;
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      ++rows;
      const double err = std::abs(static_cast<double>(weights.row(r).sum()) - 1.0);
      if (err > max_row_sum_error || std::isnan(err)) max_row_sum_error = std::isnan(err) ? INFINITY : err;
    }
  }
};

/// Forward-pass context: the tape being recorded, the parameters it reads and
/// an optional attention observer.
template <typename T>
struct Net {
  Tape<T>& tape;
  const ParamStore<T>& params;
  AttentionProbe* probe = nullptr;

  Var<T> p(int index) const { return params.bind(tape, index); }
  Var<T> constant(Mat<T> m) const { return tape.constant(std::move(m)); }
};

// ---------------------------------------------------------------------------
// Initialization

template <typename T>
Mat<T> init_normal(Eigen::Index rows, Eigen::Index cols, double stddev, RngHandle& rng) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
  return m;
}

/// Glorot-uniform fan-in/fan-out init.
template <typename T>
Mat<T> init_glorot(Eigen::Index fan_in, Eigen::Index fan_out, RngHandle& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat<T> m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

// ---------------------------------------------------------------------------
// Sinusoidal position encoding

/// Row vector encoding position `pos` with `dim` channels: interleaved
/// sin/cos at geometrically spaced frequencies.
template <typename T>
Mat<T> sinusoidal_row(double pos, int dim) {
  Mat<T> out(1, dim);
  for (int i = 0; i < dim; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
    out(0, i) = static_cast<T>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
  }
  return out;
}

template <typename T>
Mat<T> sinusoidal_table(int count, int dim) {
  Mat<T> out(count, dim);
  for (int r = 0; r < count; ++r) out.row(r) = sinusoidal_row<T>(r, dim);
  return out;
}

// ---------------------------------------------------------------------------
// Linear and normalization layers

struct LinearParams {
  int weight = -1;
  int bias = -1;  // -1 when the layer has no bias
  int in = 0;
  int out = 0;
};

template <typename T>
LinearParams make_linear(ParamStore<T>& store, const std::string& name, int in, int out, RngHandle& rng,
                         bool with_bias = true) {
  LinearParams p;
  p.in = in;
  p.out = out;
  p.weight = store.add(name + ".weight", init_glorot<T>(in, out, rng));
  if (with_bias) p.bias = store.add(name + ".bias", Mat<T>::Zero(1, out));
  return p;
}

template <typename T>
Var<T> linear(const Net<T>& net, const LinearParams& p, Var<T> x) {
  require_shape(x.cols() == p.in, "linear: expected " + std::to_string(p.in) + " input features, got " +
                                      std::to_string(x.cols()));
  Var<T> y = ag::matmul(x, net.p(p.weight));
  if (p.bias >= 0) y = ag::add_row(y, net.p(p.bias));
  return y;
}

struct LayerNormParams {
  int gamma = -1;
  int beta = -1;
};

template <typename T>
LayerNormParams make_layer_norm(ParamStore<T>& store, const std::string& name, int width) {
  return {store.add(name + ".gamma", Mat<T>::Ones(1, width)), store.add(name + ".beta", Mat<T>::Zero(1, width))};
}

template <typename T>
Var<T> layer_norm(const Net<T>& net, const LayerNormParams& p, Var<T> x) {
  return ag::layer_norm(x, net.p(p.gamma), net.p(p.beta));
}

// ---------------------------------------------------------------------------
// Attention

template <typename T>
struct QKV {
  Var<T> q, k, v;
};

/// Q = Xq Wq, K = Xkv Wk, V = Xkv Wv. Bias-free linear maps.
template <typename T>
QKV<T> qkv_project(Var<T> x_query, Var<T> x_kv, Var<T> wq, Var<T> wk, Var<T> wv) {
  return {ag::matmul(x_query, wq), ag::matmul(x_kv, wk), ag::matmul(x_kv, wv)};
}

/// softmax(Q K^T / sqrt(d)) V with row-wise softmax.
template <typename T>
Var<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v, AttentionProbe* probe = nullptr) {
  require_shape(q.cols() == k.cols() && q.cols() > 0, "attention: query/key widths differ");
  require_shape(k.rows() == v.rows(), "attention: key/value counts differ");
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(k.cols()));
  Var<T> weights = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), inv_sqrt_d));
  if (probe) probe->observe(weights.value());
  return ag::matmul(weights, v);
}

struct AttentionParams {
  int wq = -1, wk = -1, wv = -1;
  LinearParams out;
  int width = 0;
  int heads = 1;
};

template <typename T>
AttentionParams make_attention(ParamStore<T>& store, const std::string& name, int width, int heads, RngHandle& rng) {
  if (heads <= 0 || width % heads != 0)
    throw Error(ErrorCode::kBadConfig, name + ": width " + std::to_string(width) + " not divisible by " +
                                           std::to_string(heads) + " heads");
  AttentionParams p;
  p.width = width;
  p.heads = heads;
  p.wq = store.add(name + ".wq", init_glorot<T>(width, width, rng));
  p.wk = store.add(name + ".wk", init_glorot<T>(width, width, rng));
  p.wv = store.add(name + ".wv", init_glorot<T>(width, width, rng));
  p.out = make_linear(store, name + ".out", width, width, rng);
  return p;
}

/// Heads run on width/heads column slices, are concatenated, then pass
/// through the output projection.
template <typename T>
Var<T> multi_head_attention(const Net<T>& net, const AttentionParams& p, Var<T> x_query, Var<T> x_kv) {
  require_shape(x_query.cols() == p.width && x_kv.cols() == p.width, "multi_head_attention: token width mismatch");
  QKV<T> proj = qkv_project(x_query, x_kv, net.p(p.wq), net.p(p.wk), net.p(p.wv));
  const int dh = p.width / p.heads;
  Var<T> concat;
  if (p.heads == 1) {
    concat = scaled_dot_attention(proj.q, proj.k, proj.v, net.probe);
  } else {
    std::vector<Var<T>> heads;
    heads.reserve(p.heads);
    for (int h = 0; h < p.heads; ++h) {
      heads.push_back(scaled_dot_attention(ag::slice_cols(proj.q, h * dh, dh), ag::slice_cols(proj.k, h * dh, dh),
                                           ag::slice_cols(proj.v, h * dh, dh), net.probe));
    }
    concat = ag::concat_cols(heads);
  }
  return linear(net, p.out, concat);
}

struct TransformerLayerParams {
  AttentionParams attn;
  LayerNormParams norm1;
  LinearParams ff1;
  LinearParams ff2;
  LayerNormParams norm2;
};

template <typename T>
TransformerLayerParams make_transformer_layer(ParamStore<T>& store, const std::string& name, int width, int heads,
                                              int ff_width, RngHandle& rng) {
  TransformerLayerParams p;
  p.attn = make_attention(store, name + ".attn", width, heads, rng);
  p.norm1 = make_layer_norm(store, name + ".norm1", width);
  p.ff1 = make_linear(store, name + ".ff1", width, ff_width, rng);
  p.ff2 = make_linear(store, name + ".ff2", ff_width, width, rng);
  p.norm2 = make_layer_norm(store, name + ".norm2", width);
  return p;
}

/// Post-norm layer: x = LN(x + MHA(x, kv)); x = LN(x + FF(x)).
/// Pass kv == x for self-attention.
template <typename T>
Var<T> transformer_layer(const Net<T>& net, const TransformerLayerParams& p, Var<T> x, Var<T> kv) {
  Var<T> attended = multi_head_attention(net, p.attn, x, kv);
  Var<T> h = layer_norm(net, p.norm1, ag::add(x, attended));
  Var<T> ff = linear(net, p.ff2, ag::relu(linear(net, p.ff1, h)));
  return layer_norm(net, p.norm2, ag::add(h, ff));
}

template <typename T>
Var<T> self_attention_stack(const Net<T>& net, const std::vector<TransformerLayerParams>& layers, Var<T> x) {
  for (const auto& layer : layers) x = transformer_layer(net, layer, x, x);
  return x;
}

template <typename T>
std::vector<TransformerLayerParams> make_stack(ParamStore<T>& store, const std::string& name, int layers, int width,
                                               int heads, int ff_width, RngHandle& rng) {
  std::vector<TransformerLayerParams> out;
  for (int l = 0; l < layers; ++l)
    out.push_back(make_transformer_layer(store, name + ".layer" + std::to_string(l), width, heads, ff_width, rng));
  return out;
}

/// Converts a double matrix into the model scalar type.
template <typename T>
Mat<T> to_model(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& m) {
  return m.template cast<T>();
}

}  // namespace mcld
