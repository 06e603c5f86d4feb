#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sapview/angle.hpp"
#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/tensor.hpp"

namespace sapview {

/// Where proposed anchors may land.
///   on_joints:   g(x) = x with a large alpha, so the softmax snaps onto one joint
///   within_body: g(x) = x with a small alpha, a convex blend of joints
///   around_body: g(x) = W_g x, free to leave the body
enum class AnchorMode { on_joints, within_body, around_body };

inline std::string to_string(AnchorMode m) {
  switch (m) {
    case AnchorMode::on_joints: return "on_joints";
    case AnchorMode::within_body: return "within_body";
    case AnchorMode::around_body: return "around_body";
  }
  return "around_body";
}

inline AnchorMode anchor_mode_from_string(const std::string& s) {
  if (s == "on_joints") return AnchorMode::on_joints;
  if (s == "within_body") return AnchorMode::within_body;
  if (s == "around_body") return AnchorMode::around_body;
  throw SpecError("unknown anchor mode '" + s + "'");
}

inline constexpr double kDefaultAlphaSnap = 20.0;

inline double default_alpha(AnchorMode m) { return m == AnchorMode::on_joints ? kDefaultAlphaSnap : 1.0; }

struct SapConfig {
  std::size_t pairs = 5;  // M; the module runs 2*M heads
  std::size_t dim = 8;    // attention dimension d
  AnchorMode mode = AnchorMode::around_body;
  double alpha = 0.0;  // <= 0 selects default_alpha(mode)
  double alpha_snap = kDefaultAlphaSnap;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : default_alpha(mode); }
  friend bool operator==(const SapConfig&, const SapConfig&) = default;
};

/// One attention head: phi, psi are affine maps R^3 -> R^d; wg is the 3x3
/// map g(x) = wg x used only in around_body mode.
struct SapHead {
  Tensor phi_w, phi_b, psi_w, psi_b, wg;

  explicit SapHead(std::size_t d = 1)
      : phi_w({d, 3}), phi_b({d}), psi_w({d, 3}), psi_b({d}), wg({3, 3}) {}

  std::size_t dim() const noexcept { return phi_b.size(); }

  template <class F>
  void visit(const std::string& prefix, bool around, F&& f) {
    f(prefix + ".phi_w", phi_w, true);
    f(prefix + ".phi_b", phi_b, true);
    f(prefix + ".psi_w", psi_w, true);
    f(prefix + ".psi_b", psi_b, true);
    f(prefix + ".wg", wg, around);
  }
};

struct SapParams {
  SapConfig config;
  Tensor log_alpha{{1}};  // alpha = exp(log_alpha) stays positive under any update
  std::vector<SapHead> heads;  // heads 2k and 2k+1 produce pair k

  SapParams() = default;

  double alpha() const { return std::exp(log_alpha[0]); }

  /// phi/psi: fan-in scaled uniform; wg: identity plus N(0, 0.01^2).
  static SapParams init(const SapConfig& cfg, std::mt19937_64& rng) {
    SapParams p;
    p.config = cfg;
    if (!(cfg.resolved_alpha() > 0.0)) throw SpecError("SAP alpha must be positive");
    p.log_alpha[0] = std::log(cfg.resolved_alpha());
    p.heads.assign(2 * cfg.pairs, SapHead(cfg.dim));
    const double bound = 1.0 / std::sqrt(3.0);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (auto& h : p.heads) {
      h.phi_w.uniform(rng, bound);
      h.phi_b.uniform(rng, bound);
      h.psi_w.uniform(rng, bound);
      h.psi_b.uniform(rng, bound);
      for (std::size_t i = 0; i < 9; ++i) h.wg[i] = (i % 4 == 0 ? 1.0 : 0.0) + noise(rng);
    }
    p.validate();
    return p;
  }

  SapParams zeros_like() const {
    SapParams g = *this;
    g.visit([](const std::string&, Tensor& t, bool) { t.fill(0.0); });
    return g;
  }

  std::size_t pairs() const noexcept { return heads.size() / 2; }
  std::size_t dim() const noexcept { return heads.empty() ? 0 : heads[0].dim(); }
  AnchorMode mode() const noexcept { return config.mode; }

  void validate() const {
    if (heads.empty() || heads.size() % 2 != 0) throw SpecError("SAP needs 2*M heads with M >= 1");
    if (dim() < 1) throw SpecError("SAP attention dimension must be >= 1");
    if (!std::isfinite(log_alpha[0])) throw SpecError("SAP alpha must be positive and finite");
    if (config.mode == AnchorMode::on_joints && alpha() < config.alpha_snap * (1.0 - 1e-12))
      throw SpecError("on_joints mode requires alpha >= alpha_snap");
  }

  /// alpha is trainable only in around_body mode; wg is only used there.
  template <class F>
  void visit(F&& f) {
    const bool around = config.mode == AnchorMode::around_body;
    f(std::string("sap.log_alpha"), log_alpha, around);
    for (std::size_t h = 0; h < heads.size(); ++h) heads[h].visit("sap.head" + std::to_string(h), around, f);
  }
};

/// M anchor pairs plus, per anchor, the softmax weights over joints that
/// produced it (layout M x 2 x J).
struct ViewSet {
  std::vector<AnchorPair> pairs;
  std::vector<double> provenance;
  std::size_t joints = 0;

  double weight(std::size_t view, std::size_t side, std::size_t joint) const {
    return provenance[(view * 2 + side) * joints + joint];
  }
};

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Per-joint mean over frames. Masked joints contribute their stored values.
inline std::vector<Vec3> time_average(const SkeletonSequence& seq) {
  std::vector<Vec3> xbar(seq.joints());
  for (std::size_t t = 0; t < seq.frames(); ++t)
    for (std::size_t j = 0; j < seq.joints(); ++j) xbar[j] += seq.at(t, j);
  const double inv = 1.0 / static_cast<double>(seq.frames());
  for (auto& x : xbar) x *= inv;
  return xbar;
}

namespace detail {

inline void affine3(const Tensor& w, const Tensor& b, const Vec3& x, double* out) {
  const std::size_t d = b.size();
  for (std::size_t r = 0; r < d; ++r) out[r] = w[r * 3] * x.x + w[r * 3 + 1] * x.y + w[r * 3 + 2] * x.z + b[r];
}

inline Vec3 apply_g(const SapHead& head, AnchorMode mode, const Vec3& x) {
  if (mode != AnchorMode::around_body) return x;
  const auto& w = head.wg;
  return {w[0] * x.x + w[1] * x.y + w[2] * x.z, w[3] * x.x + w[4] * x.y + w[5] * x.z,
          w[6] * x.x + w[7] * x.y + w[8] * x.z};
}

inline std::vector<double> softmax(std::span<const double> a) {
  std::vector<double> w(a.size());
  const double mx = *std::max_element(a.begin(), a.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (w[i] = std::exp(a[i] - mx));
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Raw alignment scores a_i = alpha * <phi(x_i), sum_j psi(x_j)>, computed in
/// factored form.
inline std::vector<double> anchor_scores(std::span<const Vec3> xbar, const SapHead& head, double alpha) {
  const std::size_t d = head.dim();
  std::vector<double> psi_sum(d, 0.0), tmp(d);
  for (const auto& x : xbar) {
    detail::affine3(head.psi_w, head.psi_b, x, tmp.data());
    for (std::size_t r = 0; r < d; ++r) psi_sum[r] += tmp[r];
  }
  std::vector<double> scores(xbar.size());
  for (std::size_t i = 0; i < xbar.size(); ++i) {
    detail::affine3(head.phi_w, head.phi_b, xbar[i], tmp.data());
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += tmp[r] * psi_sum[r];
    scores[i] = alpha * s;
  }
  return scores;
}

struct AnchorCenter {
  Vec3 anchor;
  std::vector<double> weights;
};

/// anchor = sum_i softmax(scores)_i * g(x_i).
inline AnchorCenter anchor_center(std::span<const Vec3> xbar, std::span<const double> scores, const SapHead& head,
                                  AnchorMode mode) {
  AnchorCenter out;
  out.weights = detail::softmax(scores);
  for (std::size_t i = 0; i < xbar.size(); ++i) out.anchor += detail::apply_g(head, mode, xbar[i]) * out.weights[i];
  return out;
}

inline ViewSet propose_views(const SkeletonSequence& seq, const SapParams& params) {
  const auto xbar = time_average(seq);
  const std::size_t J = xbar.size();
  ViewSet vs;
  vs.joints = J;
  vs.pairs.resize(params.pairs());
  vs.provenance.resize(params.heads.size() * J);
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    const auto scores = anchor_scores(xbar, params.heads[h], params.alpha());
    auto c = anchor_center(xbar, scores, params.heads[h], params.mode());
    (h % 2 == 0 ? vs.pairs[h / 2].a : vs.pairs[h / 2].b) = c.anchor;
    std::copy(c.weights.begin(), c.weights.end(), vs.provenance.begin() + static_cast<std::ptrdiff_t>(h * J));
  }
  return vs;
}

/// Anchors taken directly from time-averaged joints (the fixed-pairs baseline).
inline ViewSet fixed_views(const SkeletonSequence& seq, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  const auto xbar = time_average(seq);
  ViewSet vs;
  vs.joints = xbar.size();
  vs.provenance.assign(pairs.size() * 2 * vs.joints, 0.0);
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    const auto [p, q] = pairs[m];
    if (p >= vs.joints || q >= vs.joints) throw ModelError("fixed anchor joint index out of range");
    vs.pairs.push_back({xbar[p], xbar[q]});
    vs.provenance[(m * 2) * vs.joints + p] = 1.0;
    vs.provenance[(m * 2 + 1) * vs.joints + q] = 1.0;
  }
  return vs;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Gradients of all SAP parameters given dL/d(anchor) for every pair. The
/// result has the layout of `params`. When `dxbar` is non-null it receives
/// dL/d(x_bar) as well.
inline SapParams sap_backward(const SkeletonSequence& seq, const SapParams& params,
                              std::span<const AnchorPair> upstream, std::vector<Vec3>* dxbar = nullptr) {
  if (upstream.size() != params.pairs()) throw ModelError("anchor gradient count does not match SAP pairs");
  SapParams grad = params.zeros_like();
  const auto xbar = time_average(seq);
  const std::size_t J = xbar.size();
  const std::size_t d = params.dim();
  const double alpha = params.alpha();
  const AnchorMode mode = params.mode();
  if (dxbar) dxbar->assign(J, Vec3{});

  std::vector<double> phi(J * d), psi_sum(d), tmp(d), dphi(d), ds(d);
  Vec3 xsum;
  for (const auto& x : xbar) xsum += x;

  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    const Vec3 gamma = (h % 2 == 0) ? upstream[h / 2].a : upstream[h / 2].b;
    if (gamma == Vec3{}) continue;
    const SapHead& head = params.heads[h];
    SapHead& gh = grad.heads[h];

    std::fill(psi_sum.begin(), psi_sum.end(), 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      detail::affine3(head.psi_w, head.psi_b, xbar[j], tmp.data());
      for (std::size_t r = 0; r < d; ++r) psi_sum[r] += tmp[r];
    }
    std::vector<double> raw(J), scores(J);
    for (std::size_t i = 0; i < J; ++i) {
      detail::affine3(head.phi_w, head.phi_b, xbar[i], &phi[i * d]);
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += phi[i * d + r] * psi_sum[r];
      raw[i] = s;
      scores[i] = alpha * s;
    }
    const auto w = detail::softmax(scores);

    // anchor = sum_i w_i g(x_i)
    std::vector<double> dw(J);
    double wdw = 0.0;
    for (std::size_t i = 0; i < J; ++i) {
      dw[i] = dot(gamma, detail::apply_g(head, mode, xbar[i]));
      wdw += w[i] * dw[i];
    }
    if (mode == AnchorMode::around_body) {
      Vec3 wx;
      for (std::size_t i = 0; i < J; ++i) wx += xbar[i] * w[i];
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) gh.wg[r * 3 + c] += gamma[r] * wx[c];
    }
    if (dxbar) {
      Vec3 gx = gamma;
      if (mode == AnchorMode::around_body) {
        const auto& m = head.wg;
        gx = {m[0] * gamma.x + m[3] * gamma.y + m[6] * gamma.z, m[1] * gamma.x + m[4] * gamma.y + m[7] * gamma.z,
              m[2] * gamma.x + m[5] * gamma.y + m[8] * gamma.z};
      }
      for (std::size_t i = 0; i < J; ++i) (*dxbar)[i] += gx * w[i];
    }

    // softmax, then a_i = alpha * raw_i
    std::fill(ds.begin(), ds.end(), 0.0);
    for (std::size_t i = 0; i < J; ++i) {
      const double da = w[i] * (dw[i] - wdw);
      grad.log_alpha[0] += alpha * da * raw[i];
      const double draw = alpha * da;
      for (std::size_t r = 0; r < d; ++r) {
        dphi[r] = draw * psi_sum[r];
        ds[r] += draw * phi[i * d + r];
      }
      for (std::size_t r = 0; r < d; ++r) {
        gh.phi_b[r] += dphi[r];
        for (std::size_t c = 0; c < 3; ++c) gh.phi_w[r * 3 + c] += dphi[r] * xbar[i][c];
      }
      if (dxbar)
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < d; ++r) acc += head.phi_w[r * 3 + c] * dphi[r];
          (*dxbar)[i][c] += acc;
        }
    }
    // psi_sum = sum_j psi(x_j)
    for (std::size_t r = 0; r < d; ++r) {
      gh.psi_b[r] += static_cast<double>(J) * ds[r];
      for (std::size_t c = 0; c < 3; ++c) gh.psi_w[r * 3 + c] += ds[r] * xsum[c];
    }
    if (dxbar)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < d; ++r) acc += head.psi_w[r * 3 + c] * ds[r];
        for (std::size_t j = 0; j < J; ++j) (*dxbar)[j][c] += acc;
      }
  }
  return grad;
}

/// CSV `view,anchor,x,y,z` with anchor in {a, b}.
inline std::string anchors_to_csv(const ViewSet& vs) {
  std::string out = "view,anchor,x,y,z\n";
  for (std::size_t m = 0; m < vs.pairs.size(); ++m)
    for (int side = 0; side < 2; ++side) {
      const Vec3& p = side == 0 ? vs.pairs[m].a : vs.pairs[m].b;
      out += std::to_string(m) + (side == 0 ? ",a," : ",b,") + format_double(p.x) + "," + format_double(p.y) + "," +
             format_double(p.z) + "\n";
    }
  return out;
}

/// CSV `view,anchor,joint,weight`.
inline std::string provenance_to_csv(const ViewSet& vs) {
  std::string out = "view,anchor,joint,weight\n";
  for (std::size_t m = 0; m < vs.pairs.size(); ++m)
    for (std::size_t side = 0; side < 2; ++side)
      for (std::size_t j = 0; j < vs.joints; ++j)
        out += std::to_string(m) + (side == 0 ? ",a," : ",b,") + std::to_string(j) + "," +
               format_double(vs.weight(m, side, j)) + "\n";
  return out;
}

}  // namespace sapview
