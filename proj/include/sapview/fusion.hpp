#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sapview/angle.hpp"
#include "sapview/core.hpp"
#include "sapview/tensor.hpp"

namespace sapview {

enum class FusionStrategy { sum, max, concatenate, attention };

inline std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::sum: return "sum";
    case FusionStrategy::max: return "max";
    case FusionStrategy::concatenate: return "concatenate";
    case FusionStrategy::attention: return "attention";
  }
  return "attention";
}

inline FusionStrategy fusion_from_string(const std::string& s) {
  if (s == "sum") return FusionStrategy::sum;
  if (s == "max") return FusionStrategy::max;
  if (s == "concatenate") return FusionStrategy::concatenate;
  if (s == "attention") return FusionStrategy::attention;
  throw SpecError("unknown fusion strategy '" + s + "'");
}

inline std::size_t fused_channels(FusionStrategy s, std::size_t views) {
  return (s == FusionStrategy::sum || s == FusionStrategy::max) ? 1 : views;
}

/// Channel attention over the view axis: mean- and max-pooled descriptors
/// share one squeeze-excite MLP (M -> s -> M, ReLU in between); the two
/// outputs are summed and gated by a logistic.
struct FusionParams {
  FusionStrategy strategy = FusionStrategy::attention;
  std::size_t views = 1;
  Tensor w1, b1, w2, b2;  // empty unless strategy == attention

  static std::size_t default_squeeze(std::size_t views) { return std::max<std::size_t>(views / 2, 1); }

  static FusionParams init(FusionStrategy strategy, std::size_t views, std::mt19937_64& rng,
                           std::size_t squeeze = 0) {
    FusionParams p;
    p.strategy = strategy;
    p.views = views;
    if (strategy == FusionStrategy::attention) {
      if (squeeze == 0) squeeze = default_squeeze(views);
      p.w1 = Tensor({squeeze, views});
      p.b1 = Tensor({squeeze});
      p.w2 = Tensor({views, squeeze});
      p.b2 = Tensor({views});
      p.w1.uniform(rng, 1.0 / std::sqrt(static_cast<double>(views)));
      p.w2.uniform(rng, 1.0 / std::sqrt(static_cast<double>(squeeze)));
    }
    return p;
  }

  std::size_t squeeze() const noexcept { return b1.size(); }

  FusionParams zeros_like() const {
    FusionParams g = *this;
    g.visit([](const std::string&, Tensor& t, bool) { t.fill(0.0); });
    return g;
  }

  template <class F>
  void visit(F&& f) {
    if (strategy != FusionStrategy::attention) return;
    f(std::string("fusion.w1"), w1, true);
    f(std::string("fusion.b1"), b1, true);
    f(std::string("fusion.w2"), w2, true);
    f(std::string("fusion.b2"), b2, true);
  }
};

/// C x T x J fused angle stream.
struct FusedStream {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> values;

  double operator()(std::size_t c, std::size_t t, std::size_t j) const { return values[(c * frames + t) * joints + j]; }
};

namespace detail {

struct GateCache {
  std::vector<double> pooled_avg, pooled_max;
  std::vector<std::size_t> argmax;  // flat (t, j) index per view
  std::vector<double> hidden_avg, hidden_max;  // pre-ReLU
  std::vector<double> gate;
};

inline void excite(const FusionParams& p, std::span<const double> in, std::vector<double>& hidden,
                   std::vector<double>& out) {
  const std::size_t M = p.views, S = p.squeeze();
  hidden.assign(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    double acc = p.b1[s];
    for (std::size_t m = 0; m < M; ++m) acc += p.w1[s * M + m] * in[m];
    hidden[s] = acc;
  }
  for (std::size_t m = 0; m < M; ++m) {
    double acc = p.b2[m];
    for (std::size_t s = 0; s < S; ++s) acc += p.w2[m * S + s] * std::max(hidden[s], 0.0);
    out[m] += acc;
  }
}

inline GateCache attention_gate(const AngleTensor& x, const FusionParams& p) {
  const std::size_t M = x.views(), TJ = x.frames() * x.joints();
  GateCache c;
  c.pooled_avg.assign(M, 0.0);
  c.pooled_max.assign(M, 0.0);
  c.argmax.assign(M, 0);
  const auto& v = x.values();
  for (std::size_t m = 0; m < M; ++m) {
    const double* row = v.data() + m * TJ;
    double sum = 0.0, best = row[0];
    std::size_t arg = 0;
    for (std::size_t k = 0; k < TJ; ++k) {
      sum += row[k];
      if (row[k] > best) {
        best = row[k];
        arg = k;
      }
    }
    c.pooled_avg[m] = sum / static_cast<double>(TJ);
    c.pooled_max[m] = best;
    c.argmax[m] = arg;
  }
  std::vector<double> z(M, 0.0);
  excite(p, c.pooled_avg, c.hidden_avg, z);
  excite(p, c.pooled_max, c.hidden_max, z);
  c.gate.resize(M);
  for (std::size_t m = 0; m < M; ++m) c.gate[m] = 1.0 / (1.0 + std::exp(-z[m]));
  return c;
}

}  // namespace detail

/// Per-view attention factors in (0, 1).
inline std::vector<double> attention_factors(const AngleTensor& angles, const FusionParams& params) {
  return detail::attention_gate(angles, params).gate;
}

inline FusedStream fuse(const AngleTensor& angles, const FusionParams& params) {
  const std::size_t M = angles.views(), T = angles.frames(), J = angles.joints(), TJ = T * J;
  if (M < 1) throw ModelError("fusion needs at least one view");
  if (params.views != M) throw ModelError("fusion parameters built for a different view count");
  FusedStream out{fused_channels(params.strategy, M), T, J, {}};
  const auto& v = angles.values();
  switch (params.strategy) {
    case FusionStrategy::sum:
      out.values.assign(TJ, 0.0);
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < TJ; ++k) out.values[k] += v[m * TJ + k];
      break;
    case FusionStrategy::max:
      out.values.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(TJ));
      for (std::size_t m = 1; m < M; ++m)
        for (std::size_t k = 0; k < TJ; ++k) out.values[k] = std::max(out.values[k], v[m * TJ + k]);
      break;
    case FusionStrategy::concatenate: out.values = v; break;
    case FusionStrategy::attention: {
      const auto gate = detail::attention_gate(angles, params).gate;
      out.values.resize(v.size());
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < TJ; ++k) out.values[m * TJ + k] = gate[m] * v[m * TJ + k];
      break;
    }
  }
  return out;
}

struct FusionGradient {
  std::vector<double> angles;  // layout of AngleTensor::values()
  FusionParams params;
};

/// Max uses the argmax subgradient with ties going to the lowest view index.
inline FusionGradient fuse_backward(const AngleTensor& angles, const FusionParams& params,
                                    std::span<const double> upstream) {
  const std::size_t M = angles.views(), TJ = angles.frames() * angles.joints();
  if (upstream.size() != fused_channels(params.strategy, M) * TJ) throw ModelError("fused gradient has wrong size");
  FusionGradient g{std::vector<double>(M * TJ, 0.0), params.zeros_like()};
  const auto& v = angles.values();
  switch (params.strategy) {
    case FusionStrategy::sum:
      for (std::size_t m = 0; m < M; ++m)
        std::copy(upstream.begin(), upstream.end(), g.angles.begin() + static_cast<std::ptrdiff_t>(m * TJ));
      break;
    case FusionStrategy::max:
      for (std::size_t k = 0; k < TJ; ++k) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < M; ++m)
          if (v[m * TJ + k] > v[best * TJ + k]) best = m;
        g.angles[best * TJ + k] = upstream[k];
      }
      break;
    case FusionStrategy::concatenate: std::copy(upstream.begin(), upstream.end(), g.angles.begin()); break;
    case FusionStrategy::attention: {
      const auto c = detail::attention_gate(angles, params);
      const std::size_t S = params.squeeze();
      std::vector<double> dz(M);
      for (std::size_t m = 0; m < M; ++m) {
        double df = 0.0;
        for (std::size_t k = 0; k < TJ; ++k) {
          g.angles[m * TJ + k] = c.gate[m] * upstream[m * TJ + k];
          df += upstream[m * TJ + k] * v[m * TJ + k];
        }
        dz[m] = df * c.gate[m] * (1.0 - c.gate[m]);
      }
      auto branch = [&](const std::vector<double>& in, const std::vector<double>& hidden, std::vector<double>& din) {
        din.assign(M, 0.0);
        std::vector<double> dh(S, 0.0);
        for (std::size_t m = 0; m < M; ++m) {
          g.params.b2[m] += dz[m];
          for (std::size_t s = 0; s < S; ++s) {
            g.params.w2[m * S + s] += dz[m] * std::max(hidden[s], 0.0);
            dh[s] += params.w2[m * S + s] * dz[m];
          }
        }
        for (std::size_t s = 0; s < S; ++s) {
          if (hidden[s] <= 0.0) continue;
          g.params.b1[s] += dh[s];
          for (std::size_t m = 0; m < M; ++m) {
            g.params.w1[s * M + m] += dh[s] * in[m];
            din[m] += params.w1[s * M + m] * dh[s];
          }
        }
      };
      std::vector<double> davg, dmax;
      branch(c.pooled_avg, c.hidden_avg, davg);
      branch(c.pooled_max, c.hidden_max, dmax);
      for (std::size_t m = 0; m < M; ++m) {
        const double a = davg[m] / static_cast<double>(TJ);
        for (std::size_t k = 0; k < TJ; ++k) g.angles[m * TJ + k] += a;
        g.angles[m * TJ + c.argmax[m]] += dmax[m];
      }
      break;
    }
  }
  return g;
}

}  // namespace sapview
