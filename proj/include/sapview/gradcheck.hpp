#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sapview/model.hpp"

namespace sapview {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so parameters whose true
  /// gradient is ~0 are judged on an absolute scale.
  double denominator_floor = 1e-5;
  /// 0 checks every parameter; otherwise a seeded random subsample of this size.
  std::size_t max_checks = 0;
  std::uint64_t seed = 0;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(Model&)> fault;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Compares the analytic gradient of the mean batch cross-entropy with
/// central finite differences, one scalar parameter at a time.
inline GradCheckReport verify_gradients(Model model, std::span<const SkeletonSequence* const> batch,
                                        const GradCheckOptions& opt = {}) {
  Model grad = model.zeros_like();
  batch_loss(model, batch, &grad);
  if (opt.fault) opt.fault(grad);

  auto params = model.parameters();
  auto grads = grad.parameters();
  struct Slot {
    std::size_t param, index;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].tensor->size(); ++i) slots.push_back({k, i});
  if (opt.max_checks > 0 && opt.max_checks < slots.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(slots.begin(), slots.end(), rng);
    slots.resize(opt.max_checks);
  }

  GradCheckReport rep;
  for (const auto& s : slots) {
    double& p = (*params[s.param].tensor)[s.index];
    const double saved = p;
    p = saved + opt.step;
    const double plus = batch_loss(model, batch, nullptr);
    p = saved - opt.step;
    const double minus = batch_loss(model, batch, nullptr);
    p = saved;
    const double numeric = (plus - minus) / (2.0 * opt.step);
    const double analytic = (*grads[s.param].tensor)[s.index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.denominator_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++rep.checked;
    if (rel > rep.max_rel_error || !std::isfinite(rel)) {
      rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
      rep.worst_param = params[s.param].name;
      rep.worst_index = s.index;
      rep.worst_analytic = analytic;
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = rep.max_rel_error <= opt.tolerance;
  return rep;
}

/// Small three-stream model over a 3-joint chain: M = 2 views, d = 4.
inline ModelConfig toy_model_config(FusionStrategy fusion = FusionStrategy::attention,
                                    AnchorMode mode = AnchorMode::around_body,
                                    Aggregation aggregation = Aggregation::score) {
  ModelConfig c;
  c.joints = 3;
  c.num_classes = 3;
  c.bones = {{0, 1}, {1, 2}};
  c.streams = {true, true, true};
  c.sap.pairs = 2;
  c.sap.dim = 4;
  c.sap.mode = mode;
  c.fusion = fusion;
  c.widths = {4, 5};
  c.aggregation = aggregation;
  return c;
}

/// A bent 3-joint chain per class (class k bends by a different angle) over
/// `frames` frames with 2 cm uniform jitter.
inline std::vector<SkeletonSequence> toy_batch(std::size_t classes = 3, std::size_t frames = 2, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::vector<SkeletonSequence> out;
  for (std::size_t k = 0; k < classes; ++k) {
    SkeletonSequence s(frames, 3, {{0, 1}, {1, 2}}, static_cast<int>(k));
    const double bend = 0.6 + 0.5 * static_cast<double>(k);
    for (std::size_t t = 0; t < frames; ++t) {
      const Vec3 base[3] = {{0.0, 0.0, 0.0}, {0.0, 0.5, 0.1}, {0.5 * std::sin(bend), 0.5 + 0.5 * std::cos(bend), 0.2}};
      for (std::size_t j = 0; j < 3; ++j) s.at(t, j) = base[j] + Vec3{jitter(rng), jitter(rng), jitter(rng)};
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sapview
