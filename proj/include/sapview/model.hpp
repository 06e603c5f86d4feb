#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sapview/angle.hpp"
#include "sapview/backbone.hpp"
#include "sapview/core.hpp"
#include "sapview/fusion.hpp"
#include "sapview/sap.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/tensor.hpp"

namespace sapview {

enum class StreamKind : std::size_t { joints = 0, bones = 1, angles = 2 };
inline constexpr std::array<const char*, 3> kStreamNames = {"joints", "bones", "angles"};

enum class ViewSource { sap, fixed_pairs };
enum class Aggregation { score, feature };

inline std::string to_string(ViewSource v) { return v == ViewSource::sap ? "sap" : "fixed_pairs"; }
inline ViewSource view_source_from_string(const std::string& s) {
  if (s == "sap") return ViewSource::sap;
  if (s == "fixed_pairs") return ViewSource::fixed_pairs;
  throw SpecError("unknown view source '" + s + "'");
}
inline std::string to_string(Aggregation a) { return a == Aggregation::score ? "score" : "feature"; }
inline Aggregation aggregation_from_string(const std::string& s) {
  if (s == "score") return Aggregation::score;
  if (s == "feature") return Aggregation::feature;
  throw SpecError("unknown aggregation '" + s + "'");
}

using JointPair = std::pair<std::size_t, std::size_t>;

struct ModelConfig {
  std::size_t joints = 0;
  std::size_t num_classes = 0;
  std::vector<Bone> bones;
  std::array<bool, 3> streams{true, false, true};  // joints, bones, angles
  ViewSource view_source = ViewSource::sap;
  std::vector<JointPair> fixed_pairs;
  SapConfig sap;
  FusionStrategy fusion = FusionStrategy::attention;
  std::vector<std::size_t> widths{16, 32};
  Aggregation aggregation = Aggregation::score;
  std::array<double, 3> ensemble_weights{1.0, 1.0, 1.0};
  double eps = kDefaultAngleEps;
  bool freeze_backbone = false;
  bool train_ensemble = false;
  /// Standardize each stream's backbone input with statistics fitted on the
  /// training set before the first step (see fit_input_normalization).
  bool input_norm = true;
  /// Translate each sequence so its root joint (index 0) sits at the origin
  /// in the first frame where that joint is valid.
  bool center_on_root = true;

  bool uses(StreamKind s) const { return streams[static_cast<std::size_t>(s)]; }
  std::size_t views() const { return view_source == ViewSource::sap ? sap.pairs : fixed_pairs.size(); }

  void validate() const {
    if (joints < 2) throw SpecError("model needs J >= 2");
    if (num_classes < 2) throw SpecError("model needs at least two classes");
    if (!streams[0] && !streams[1] && !streams[2]) throw SpecError("at least one stream must be enabled");
    if (uses(StreamKind::bones) && bones.empty()) throw SpecError("bone stream needs a bone list");
    if (uses(StreamKind::angles) && views() == 0) throw SpecError("angle stream needs at least one view");
    if (!(eps > 0.0)) throw SpecError("angle eps must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Affine classifier y = W x + b.
struct Linear {
  Tensor w, b;

  static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Linear l{Tensor({out, in}), Tensor({out})};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.w.uniform(rng, bound);
    l.b.uniform(rng, bound);
    return l;
  }

  std::vector<double> forward(std::span<const double> x) const {
    const std::size_t out = b.size(), in = x.size();
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
      y[o] = acc;
    }
    return y;
  }

  std::vector<double> backward(std::span<const double> x, std::span<const double> dy, Linear& grad) const {
    const std::size_t out = b.size(), in = x.size();
    std::vector<double> dx(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      grad.b[o] += dy[o];
      for (std::size_t i = 0; i < in; ++i) {
        grad.w[o * in + i] += dy[o] * x[i];
        dx[i] += w[o * in + i] * dy[o];
      }
    }
    return dx;
  }
};

/// Frozen per-channel affine map x -> (x - mean) * scale; empty = identity.
struct InputNorm {
  std::vector<double> mean, scale;

  bool empty() const noexcept { return mean.empty(); }
  friend bool operator==(const InputNorm&, const InputNorm&) = default;
};

/// The full multi-stream classifier.
class Model {
 public:
  ModelConfig config;
  std::vector<double> adjacency;
  SapParams sap;
  FusionParams fusion;
  std::array<Backbone, 3> nets;
  std::array<Linear, 3> heads;  // per-stream classifiers (score aggregation)
  Linear shared_head;           // feature aggregation
  Tensor ensemble{{3}};
  std::array<InputNorm, 3> norms;  // not trained; fitted once from data

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config = cfg;
    m.adjacency = normalized_adjacency(cfg.joints, cfg.bones);
    for (std::size_t s = 0; s < 3; ++s) m.ensemble[s] = cfg.ensemble_weights[s];
    // Each component draws from its own stream so enabling one part never
    // changes another part's initialization.
    auto rng_for = [&](std::uint64_t component) { return std::mt19937_64(mix_seed(seed, 0xA000 + component)); };
    if (cfg.uses(StreamKind::angles)) {
      if (cfg.view_source == ViewSource::sap) {
        auto r = rng_for(0);
        m.sap = SapParams::init(cfg.sap, r);
      }
      auto r = rng_for(1);
      m.fusion = FusionParams::init(cfg.fusion, cfg.views(), r);
    }
    std::size_t feature_width = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (!cfg.streams[s]) continue;
      const std::size_t in = s == 2 ? fused_channels(cfg.fusion, cfg.views()) : 3;
      auto r = rng_for(10 + s);
      m.nets[s] = Backbone::init(in, cfg.widths, r);
      auto rh = rng_for(20 + s);
      m.heads[s] = Linear::init(m.nets[s].out_channels(), cfg.num_classes, rh);
      feature_width += m.nets[s].out_channels();
    }
    if (cfg.aggregation == Aggregation::feature) {
      auto r = rng_for(30);
      m.shared_head = Linear::init(feature_width, cfg.num_classes, r);
    }
    return m;
  }

  bool uses_sap() const { return config.uses(StreamKind::angles) && config.view_source == ViewSource::sap; }

  /// Visits every parameter tensor in a fixed order as f(name, tensor, trainable).
  template <class F>
  void visit(F&& f) {
    if (uses_sap()) sap.visit(f);
    if (config.uses(StreamKind::angles)) fusion.visit(f);
    const bool net_trainable = !config.freeze_backbone;
    for (std::size_t s = 0; s < 3; ++s) {
      if (!config.streams[s]) continue;
      const std::string name = kStreamNames[s];
      nets[s].visit(name, net_trainable, f);
      if (config.aggregation == Aggregation::score) {
        f(name + ".fc_w", heads[s].w, net_trainable);
        f(name + ".fc_b", heads[s].b, net_trainable);
      }
    }
    if (config.aggregation == Aggregation::feature) {
      f(std::string("shared.fc_w"), shared_head.w, net_trainable);
      f(std::string("shared.fc_b"), shared_head.b, net_trainable);
    } else {
      f(std::string("ensemble"), ensemble, config.train_ensemble);
    }
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    visit([&](const std::string& name, Tensor& t, bool trainable) { out.push_back({name, &t, trainable}); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor& t, bool) { n += t.size(); });
    return n;
  }

  Model zeros_like() const {
    Model g = *this;
    g.visit([](const std::string&, Tensor& t, bool) { t.fill(0.0); });
    return g;
  }

};

/// dst += scale * src over all parameters. Both must share one architecture.
inline void accumulate(Model& dst, Model& src, double scale = 1.0) {
  auto a = dst.parameters();
  auto b = src.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto& x = a[k].tensor->data;
    const auto& y = b[k].tensor->data;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += scale * y[i];
  }
}

// ---------------------------------------------------------------------------
// Stream inputs
// ---------------------------------------------------------------------------

/// Bone vectors child - parent per frame, T x num_bones x 3 (frame-major).
inline std::vector<Vec3> bones_of(const SkeletonSequence& seq) {
  if (seq.bones().empty()) throw SpecError("sequence has no bones");
  std::vector<Vec3> out;
  out.reserve(seq.frames() * seq.bones().size());
  for (std::size_t t = 0; t < seq.frames(); ++t)
    for (const auto& b : seq.bones()) out.push_back(seq.at(t, b.child) - seq.at(t, b.parent));
  return out;
}

namespace detail {

inline FeatureMap joint_input(const SkeletonSequence& seq) {
  FeatureMap x(seq.frames(), seq.joints(), 3);
  for (std::size_t t = 0; t < seq.frames(); ++t)
    for (std::size_t j = 0; j < seq.joints(); ++j) {
      const auto& p = seq.at(t, j);
      double* d = x.at(t, j);
      d[0] = p.x;
      d[1] = p.y;
      d[2] = p.z;
    }
  return x;
}

/// Each bone vector sits on its child joint; joints without a parent stay zero.
inline FeatureMap bone_input(const SkeletonSequence& seq, std::span<const Bone> bones) {
  FeatureMap x(seq.frames(), seq.joints(), 3);
  for (std::size_t t = 0; t < seq.frames(); ++t)
    for (const auto& b : bones) {
      const Vec3 v = seq.at(t, b.child) - seq.at(t, b.parent);
      double* d = x.at(t, b.child);
      d[0] = v.x;
      d[1] = v.y;
      d[2] = v.z;
    }
  return x;
}

inline FeatureMap channels_last(const FusedStream& f) {
  FeatureMap x(f.frames, f.joints, f.channels);
  for (std::size_t c = 0; c < f.channels; ++c)
    for (std::size_t t = 0; t < f.frames; ++t)
      for (std::size_t j = 0; j < f.joints; ++j) x.at(t, j)[c] = f(c, t, j);
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward / backward for one sample
// ---------------------------------------------------------------------------

/// The sequence as the network sees it (after optional root centering).
inline SkeletonSequence model_input(const ModelConfig& cfg, const SkeletonSequence& seq) {
  SkeletonSequence out = seq;
  if (!cfg.center_on_root) return out;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    if (!seq.valid(t, 0)) continue;
    const Vec3 origin = seq.at(t, 0);
    for (auto& p : out.coords()) p -= origin;
    break;
  }
  return out;
}

struct SampleCache {
  SkeletonSequence input;
  std::array<BackboneCache, 3> nets;
  std::array<std::vector<double>, 3> stream_logits;
  ViewSet views;
  AngleTensor angles;
  std::vector<double> features;  // concatenated (feature aggregation)
  std::vector<double> logits;
};

inline void apply_norm(const InputNorm& n, FeatureMap& x) {
  if (n.empty()) return;
  if (n.mean.size() != x.channels) throw ModelError("input normalization does not match stream channels");
  const std::size_t C = x.channels;
  for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] = (x.data[k] - n.mean[k % C]) * n.scale[k % C];
}

inline ViewSet model_views(const Model& model, const SkeletonSequence& seq) {
  if (model.config.view_source == ViewSource::sap) return propose_views(seq, model.sap);
  return fixed_views(seq, model.config.fixed_pairs);
}

/// dst += src for any two parameter blocks of identical layout.
template <class Block>
void add_into(Block& dst, Block& src) {
  std::vector<Tensor*> a, b;
  dst.visit([&](const std::string&, Tensor& t, bool) { a.push_back(&t); });
  src.visit([&](const std::string&, Tensor& t, bool) { b.push_back(&t); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k]->size(); ++i) (*a[k])[i] += (*b[k])[i];
}

inline std::vector<double> forward(const Model& model, const SkeletonSequence& raw, SampleCache& cache) {
  const auto& cfg = model.config;
  if (raw.joints() != cfg.joints)
    throw ModelError("model expects J = " + std::to_string(cfg.joints) + ", sequence has " +
                     std::to_string(raw.joints()));
  cache.input = model_input(cfg, raw);
  const auto& seq = cache.input;
  cache.features.clear();
  std::array<std::vector<double>, 3> feats;
  for (std::size_t s = 0; s < 3; ++s) {
    if (!cfg.streams[s]) continue;
    FeatureMap input;
    switch (static_cast<StreamKind>(s)) {
      case StreamKind::joints: input = detail::joint_input(seq); break;
      case StreamKind::bones: input = detail::bone_input(seq, cfg.bones); break;
      case StreamKind::angles: {
        cache.views = model_views(model, seq);
        cache.angles = view_translate(seq, cache.views.pairs, cfg.eps);
        input = detail::channels_last(fuse(cache.angles, model.fusion));
        break;
      }
    }
    apply_norm(model.norms[s], input);
    feats[s] = backbone_forward(model.nets[s], std::move(input), model.adjacency, cache.nets[s]);
  }
  cache.logits.assign(cfg.num_classes, 0.0);
  if (cfg.aggregation == Aggregation::score) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (!cfg.streams[s]) continue;
      cache.stream_logits[s] = model.heads[s].forward(feats[s]);
      for (std::size_t k = 0; k < cfg.num_classes; ++k) cache.logits[k] += model.ensemble[s] * cache.stream_logits[s][k];
    }
  } else {
    for (std::size_t s = 0; s < 3; ++s) cache.features.insert(cache.features.end(), feats[s].begin(), feats[s].end());
    cache.logits = model.shared_head.forward(cache.features);
  }
  return cache.logits;
}

inline std::vector<double> forward(const Model& model, const SkeletonSequence& seq) {
  SampleCache cache;
  return forward(model, seq, cache);
}

/// Fits every enabled stream's InputNorm to the per-channel mean and standard
/// deviation of its backbone input over `data` (pooled over frames and joints).
/// The angle stream is measured through the model's current views and fusion.
inline void fit_input_normalization(Model& model, std::span<const SkeletonSequence> data) {
  const auto& cfg = model.config;
  for (std::size_t s = 0; s < 3; ++s) {
    model.norms[s] = {};
    if (!cfg.streams[s] || data.empty()) continue;
    const std::size_t C = model.nets[s].in_channels;
    std::vector<double> sum(C, 0.0), sq(C, 0.0);
    double n = 0.0;
    for (const auto& raw : data) {
      const auto seq = model_input(cfg, raw);
      FeatureMap x;
      switch (static_cast<StreamKind>(s)) {
        case StreamKind::joints: x = detail::joint_input(seq); break;
        case StreamKind::bones: x = detail::bone_input(seq, cfg.bones); break;
        case StreamKind::angles:
          x = detail::channels_last(fuse(view_translate(seq, model_views(model, seq).pairs, cfg.eps), model.fusion));
          break;
      }
      for (std::size_t k = 0; k < x.data.size(); ++k) {
        sum[k % C] += x.data[k];
        sq[k % C] += x.data[k] * x.data[k];
      }
      n += static_cast<double>(x.frames * x.joints);
    }
    InputNorm norm;
    for (std::size_t c = 0; c < C; ++c) {
      const double mean = sum[c] / n;
      const double sd = std::sqrt(std::max(sq[c] / n - mean * mean, 0.0));
      norm.mean.push_back(mean);
      norm.scale.push_back(1.0 / std::max(sd, 1e-6));
    }
    model.norms[s] = std::move(norm);
  }
}

/// Accumulates dL/d(params) into `grad` given dL/d(logits).
inline void backward(const Model& model, const SampleCache& cache, std::span<const double> dlogits, Model& grad) {
  const auto& cfg = model.config;
  const auto& seq = cache.input;
  std::array<std::vector<double>, 3> dfeat;
  if (cfg.aggregation == Aggregation::score) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (!cfg.streams[s]) continue;
      std::vector<double> dl(cfg.num_classes);
      double de = 0.0;
      for (std::size_t k = 0; k < cfg.num_classes; ++k) {
        dl[k] = model.ensemble[s] * dlogits[k];
        de += dlogits[k] * cache.stream_logits[s][k];
      }
      grad.ensemble[s] += de;
      dfeat[s] = model.heads[s].backward(cache.nets[s].features, dl, grad.heads[s]);
    }
  } else {
    const auto d = model.shared_head.backward(cache.features, dlogits, grad.shared_head);
    std::size_t off = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (!cfg.streams[s]) continue;
      const std::size_t w = model.nets[s].out_channels();
      dfeat[s].assign(d.begin() + static_cast<std::ptrdiff_t>(off), d.begin() + static_cast<std::ptrdiff_t>(off + w));
      off += w;
    }
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (!cfg.streams[s]) continue;
    const bool is_angles = s == static_cast<std::size_t>(StreamKind::angles);
    auto dx = backbone_backward(model.nets[s], model.adjacency, cache.nets[s], dfeat[s], grad.nets[s], is_angles);
    if (!is_angles) continue;
    // channels-last input gradient back to C x T x J
    const std::size_t C = dx.channels, T = dx.frames, J = dx.joints;
    const auto& norm = model.norms[s];
    std::vector<double> dfused(C * T * J);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t c = 0; c < C; ++c)
          dfused[(c * T + t) * J + j] = dx.at(t, j)[c] * (norm.empty() ? 1.0 : norm.scale[c]);
    auto fg = fuse_backward(cache.angles, model.fusion, dfused);
    add_into(grad.fusion, fg.params);
    if (cfg.view_source == ViewSource::sap) {
      const auto danchors = view_translate_backward(seq, cache.views.pairs, fg.angles, cfg.eps);
      auto gs = sap_backward(seq, model.sap, danchors);
      add_into(grad.sap, gs);
    }
  }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Softmax cross-entropy for one sample; writes dL/d(logits) when requested.
inline double softmax_cross_entropy(std::span<const double> logits, std::size_t label, std::vector<double>* dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double log_z = mx + std::log(sum);
  if (dlogits) {
    dlogits->resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) (*dlogits)[k] = std::exp(logits[k] - log_z);
    (*dlogits)[label] -= 1.0;
  }
  return log_z - logits[label];
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// True when `label` is among the k largest scores (ties broken by index).
inline bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k) {
  std::size_t better = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > scores[label] || (scores[i] == scores[label] && i < label)) ++better;
  return better < k;
}

/// Mean cross-entropy over `batch`; when `grad` is non-null it receives the
/// gradient of that mean (accumulated in sample order).
inline double batch_loss(const Model& model, std::span<const SkeletonSequence* const> batch, Model* grad,
                         std::size_t* correct = nullptr) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> dl;
  for (const auto* seq : batch) {
    SampleCache cache;
    const auto logits = forward(model, *seq, cache);
    const auto label = static_cast<std::size_t>(seq->label());
    if (label >= model.config.num_classes) throw ModelError("label out of range for model");
    loss += softmax_cross_entropy(logits, label, grad ? &dl : nullptr);
    if (correct && argmax(logits) == label) ++*correct;
    if (grad) {
      for (auto& v : dl) v *= inv;
      backward(model, cache, dl, *grad);
    }
  }
  return loss * inv;
}

}  // namespace sapview
