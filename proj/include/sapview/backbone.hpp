#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/tensor.hpp"

namespace sapview {

/// D^-1/2 (A + I) D^-1/2 for the undirected bone graph, dense J x J.
inline std::vector<double> normalized_adjacency(std::size_t joints, std::span<const Bone> bones) {
  std::vector<double> a(joints * joints, 0.0);
  for (std::size_t j = 0; j < joints; ++j) a[j * joints + j] = 1.0;
  for (const auto& b : bones) {
    if (b.parent >= joints || b.child >= joints) throw ModelError("bone index out of range for adjacency");
    if (b.parent == b.child) continue;
    a[b.parent * joints + b.child] = 1.0;
    a[b.child * joints + b.parent] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(joints, 0.0);
  for (std::size_t i = 0; i < joints; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < joints; ++j) deg += a[i * joints + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < joints; ++i)
    for (std::size_t j = 0; j < joints; ++j) a[i * joints + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return a;
}

/// Feature map laid out [t][j][c].
struct FeatureMap {
  std::size_t frames = 0, joints = 0, channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t t, std::size_t j, std::size_t c) : frames(t), joints(j), channels(c), data(t * j * c, 0.0) {}
  double* at(std::size_t t, std::size_t j) { return data.data() + (t * joints + j) * channels; }
  const double* at(std::size_t t, std::size_t j) const { return data.data() + (t * joints + j) * channels; }
};

inline constexpr double kNormEps = 1e-5;

/// Small graph-temporal network: per stage a graph layer (shared per-joint
/// linear map, adjacency mix, per-channel normalization over (T, J) with
/// scale and shift, ReLU) followed by a kernel-3 temporal convolution with
/// ReLU; a global mean over (T, J) gives the feature vector.
struct Backbone {
  std::size_t in_channels = 0;
  std::vector<Tensor> graph_w, graph_g, graph_b, temporal_w, temporal_b;  // temporal_w: [3][out][in]

  static Backbone init(std::size_t in_channels, std::span<const std::size_t> widths, std::mt19937_64& rng) {
    if (widths.empty()) throw SpecError("backbone needs at least one stage");
    Backbone b;
    b.in_channels = in_channels;
    std::size_t in = in_channels;
    for (auto w : widths) {
      if (w == 0) throw SpecError("backbone widths must be positive");
      b.graph_w.emplace_back(std::vector<std::size_t>{w, in});
      b.graph_w.back().uniform(rng, std::sqrt(6.0 / static_cast<double>(in)));
      b.graph_g.emplace_back(std::vector<std::size_t>{w});
      b.graph_g.back().fill(1.0);
      b.graph_b.emplace_back(std::vector<std::size_t>{w});
      b.graph_b.back().uniform(rng, 1.0 / std::sqrt(static_cast<double>(in)));
      b.temporal_w.emplace_back(std::vector<std::size_t>{3, w, w});
      b.temporal_w.back().uniform(rng, std::sqrt(6.0 / static_cast<double>(3 * w)));
      b.temporal_b.emplace_back(std::vector<std::size_t>{w});
      b.temporal_b.back().uniform(rng, 1.0 / std::sqrt(static_cast<double>(3 * w)));
      in = w;
    }
    return b;
  }

  std::size_t stages() const noexcept { return graph_w.size(); }
  std::size_t width(std::size_t s) const { return graph_b[s].size(); }
  std::size_t out_channels() const { return graph_b.back().size(); }

  template <class F>
  void visit(const std::string& prefix, bool trainable, F&& f) {
    for (std::size_t s = 0; s < stages(); ++s) {
      const auto p = prefix + ".stage" + std::to_string(s);
      f(p + ".graph_w", graph_w[s], trainable);
      f(p + ".graph_g", graph_g[s], trainable);
      f(p + ".graph_b", graph_b[s], trainable);
      f(p + ".temporal_w", temporal_w[s], trainable);
      f(p + ".temporal_b", temporal_b[s], trainable);
    }
  }

  Backbone zeros_like() const {
    Backbone g = *this;
    g.visit("", true, [](const std::string&, Tensor& t, bool) { t.fill(0.0); });
    return g;
  }
};

struct BackboneCache {
  std::vector<FeatureMap> inputs;   // stage inputs
  std::vector<FeatureMap> normed;   // normalized graph pre-activations
  std::vector<std::vector<double>> inv_std;
  std::vector<FeatureMap> graph;    // post-ReLU graph outputs
  std::vector<FeatureMap> temporal; // post-ReLU temporal outputs
  std::vector<double> features;     // pooled
};

namespace detail {

inline void graph_forward(const FeatureMap& x, const Tensor& w, const Tensor& g, const Tensor& b,
                          std::span<const double> adj, FeatureMap& normed, std::vector<double>& inv_std,
                          FeatureMap& out) {
  const std::size_t T = x.frames, J = x.joints, Ci = x.channels, Co = b.size();
  normed = FeatureMap(T, J, Co);
  std::vector<double> u(J * Co);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < J; ++j) {
      const double* xin = x.at(t, j);
      double* uo = &u[j * Co];
      for (std::size_t o = 0; o < Co; ++o) {
        const double* wr = w.ptr() + o * Ci;
        double acc = 0.0;
        for (std::size_t c = 0; c < Ci; ++c) acc += wr[c] * xin[c];
        uo[o] = acc;
      }
    }
    for (std::size_t i = 0; i < J; ++i) {
      double* yo = normed.at(t, i);
      for (std::size_t j = 0; j < J; ++j) {
        const double a = adj[i * J + j];
        if (a == 0.0) continue;
        const double* uo = &u[j * Co];
        for (std::size_t o = 0; o < Co; ++o) yo[o] += a * uo[o];
      }
    }
  }
  const std::size_t n = T * J;
  std::vector<double> mean(Co, 0.0), var(Co, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t o = 0; o < Co; ++o) mean[o] += normed.data[k * Co + o];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t o = 0; o < Co; ++o) {
      const double dv = normed.data[k * Co + o] - mean[o];
      var[o] += dv * dv;
    }
  inv_std.resize(Co);
  for (std::size_t o = 0; o < Co; ++o) inv_std[o] = 1.0 / std::sqrt(var[o] / static_cast<double>(n) + kNormEps);
  out = FeatureMap(T, J, Co);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t o = 0; o < Co; ++o) {
      double& h = normed.data[k * Co + o];
      h = (h - mean[o]) * inv_std[o];
      out.data[k * Co + o] = std::max(g[o] * h + b[o], 0.0);
    }
}

/// `dy` is overwritten with the ReLU-masked gradient. `dx` may be null.
inline void graph_backward(const FeatureMap& x, const FeatureMap& normed, std::span<const double> inv_std,
                           const FeatureMap& y, std::vector<double>& dy, const Tensor& w, const Tensor& g,
                           std::span<const double> adj, Tensor& dw, Tensor& dg, Tensor& db, FeatureMap* dx) {
  const std::size_t T = x.frames, J = x.joints, Ci = x.channels, Co = y.channels;
  const std::size_t n = T * J;
  for (std::size_t k = 0; k < dy.size(); ++k)
    if (y.data[k] <= 0.0) dy[k] = 0.0;
  // through scale/shift and the normalization: dy becomes dL/d(pre-norm)
  std::vector<double> mean_dh(Co, 0.0), mean_dhh(Co, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t o = 0; o < Co; ++o) {
      const double dz = dy[k * Co + o];
      const double h = normed.data[k * Co + o];
      db[o] += dz;
      dg[o] += dz * h;
      const double dh = g[o] * dz;
      dy[k * Co + o] = dh;
      mean_dh[o] += dh;
      mean_dhh[o] += dh * h;
    }
  for (std::size_t o = 0; o < Co; ++o) {
    mean_dh[o] /= static_cast<double>(n);
    mean_dhh[o] /= static_cast<double>(n);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t o = 0; o < Co; ++o) {
      double& d = dy[k * Co + o];
      d = inv_std[o] * (d - mean_dh[o] - normed.data[k * Co + o] * mean_dhh[o]);
    }

  if (dx) *dx = FeatureMap(T, J, Ci);
  std::vector<double> du(J * Co);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t i = 0; i < J; ++i) {
      const double* gr = &dy[(t * J + i) * Co];
      for (std::size_t j = 0; j < J; ++j) {
        const double a = adj[i * J + j];
        if (a == 0.0) continue;
        double* d = &du[j * Co];
        for (std::size_t o = 0; o < Co; ++o) d[o] += a * gr[o];
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      const double* xin = x.at(t, j);
      const double* d = &du[j * Co];
      for (std::size_t o = 0; o < Co; ++o) {
        if (d[o] == 0.0) continue;
        double* dwr = dw.ptr() + o * Ci;
        for (std::size_t c = 0; c < Ci; ++c) dwr[c] += d[o] * xin[c];
      }
      if (dx) {
        double* dxo = dx->at(t, j);
        for (std::size_t o = 0; o < Co; ++o) {
          if (d[o] == 0.0) continue;
          const double* wr = w.ptr() + o * Ci;
          for (std::size_t c = 0; c < Ci; ++c) dxo[c] += wr[c] * d[o];
        }
      }
    }
  }
}

inline void temporal_forward(const FeatureMap& x, const Tensor& w, const Tensor& b, FeatureMap& out) {
  const std::size_t T = x.frames, J = x.joints, C = x.channels, Co = b.size();
  out = FeatureMap(T, J, Co);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < J; ++i) {
      double* yo = out.at(t, i);
      for (std::size_t o = 0; o < Co; ++o) yo[o] = b[o];
      for (std::size_t k = 0; k < 3; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - 1;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* xin = x.at(static_cast<std::size_t>(src), i);
        const double* wk = w.ptr() + k * Co * C;
        for (std::size_t o = 0; o < Co; ++o) {
          const double* wr = wk + o * C;
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c) acc += wr[c] * xin[c];
          yo[o] += acc;
        }
      }
      for (std::size_t o = 0; o < Co; ++o) yo[o] = std::max(yo[o], 0.0);
    }
}

inline void temporal_backward(const FeatureMap& x, const FeatureMap& y, std::vector<double>& dy, const Tensor& w,
                              Tensor& dw, Tensor& db, FeatureMap& dx) {
  const std::size_t T = x.frames, J = x.joints, C = x.channels, Co = y.channels;
  for (std::size_t k = 0; k < dy.size(); ++k)
    if (y.data[k] <= 0.0) dy[k] = 0.0;
  dx = FeatureMap(T, J, C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < J; ++i) {
      const double* g = &dy[(t * J + i) * Co];
      for (std::size_t o = 0; o < Co; ++o) db[o] += g[o];
      for (std::size_t k = 0; k < 3; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - 1;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* xin = x.at(static_cast<std::size_t>(src), i);
        double* dxo = dx.at(static_cast<std::size_t>(src), i);
        const double* wk = w.ptr() + k * Co * C;
        double* dwk = dw.ptr() + k * Co * C;
        for (std::size_t o = 0; o < Co; ++o) {
          const double go = g[o];
          if (go == 0.0) continue;
          const double* wr = wk + o * C;
          double* dwr = dwk + o * C;
          for (std::size_t c = 0; c < C; ++c) {
            dwr[c] += go * xin[c];
            dxo[c] += wr[c] * go;
          }
        }
      }
    }
}

}  // namespace detail

/// Runs the backbone and returns pooled features; `cache` is filled for backward.
inline std::vector<double> backbone_forward(const Backbone& net, FeatureMap input, std::span<const double> adj,
                                            BackboneCache& cache) {
  if (input.channels != net.in_channels)
    throw ModelError("backbone expects " + std::to_string(net.in_channels) + " input channels, got " +
                     std::to_string(input.channels));
  if (adj.size() != input.joints * input.joints) throw ModelError("adjacency does not match joint count");
  const std::size_t S = net.stages();
  cache.inputs.resize(S);
  cache.normed.resize(S);
  cache.inv_std.resize(S);
  cache.graph.resize(S);
  cache.temporal.resize(S);
  cache.inputs[0] = std::move(input);
  for (std::size_t s = 0; s < S; ++s) {
    if (s > 0) cache.inputs[s] = cache.temporal[s - 1];
    detail::graph_forward(cache.inputs[s], net.graph_w[s], net.graph_g[s], net.graph_b[s], adj, cache.normed[s],
                          cache.inv_std[s], cache.graph[s]);
    detail::temporal_forward(cache.graph[s], net.temporal_w[s], net.temporal_b[s], cache.temporal[s]);
  }
  const auto& last = cache.temporal.back();
  const std::size_t C = last.channels;
  cache.features.assign(C, 0.0);
  const std::size_t n = last.frames * last.joints;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < C; ++c) cache.features[c] += last.data[k * C + c];
  for (auto& f : cache.features) f /= static_cast<double>(n);
  return cache.features;
}

/// Accumulates parameter gradients into `grad`; returns dL/d(input) when
/// `want_input_grad` is set (empty map otherwise).
inline FeatureMap backbone_backward(const Backbone& net, std::span<const double> adj, const BackboneCache& cache,
                                    std::span<const double> dfeatures, Backbone& grad, bool want_input_grad) {
  const std::size_t S = net.stages();
  const auto& last = cache.temporal.back();
  const std::size_t n = last.frames * last.joints, C = last.channels;
  std::vector<double> dy(last.data.size());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < C; ++c) dy[k * C + c] = dfeatures[c] / static_cast<double>(n);

  FeatureMap dx;
  for (std::size_t s = S; s-- > 0;) {
    FeatureMap dgraph;
    detail::temporal_backward(cache.graph[s], cache.temporal[s], dy, net.temporal_w[s], grad.temporal_w[s],
                              grad.temporal_b[s], dgraph);
    const bool need_dx = s > 0 || want_input_grad;
    detail::graph_backward(cache.inputs[s], cache.normed[s], cache.inv_std[s], cache.graph[s], dgraph.data,
                           net.graph_w[s], net.graph_g[s], adj, grad.graph_w[s], grad.graph_g[s], grad.graph_b[s],
                           need_dx ? &dx : nullptr);
    if (s > 0) dy = std::move(dx.data);
  }
  return want_input_grad ? dx : FeatureMap{};
}

}  // namespace sapview
