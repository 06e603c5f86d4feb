#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/model.hpp"
#include "sapview/optimizer.hpp"
#include "sapview/skeleton.hpp"

namespace sapview {

struct TrainConfig {
  SgdConfig sgd;
  std::size_t epochs = 50;
  std::size_t batch = 16;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t count = 0;
};

inline EvalResult evaluate(const Model& model, std::span<const SkeletonSequence> data) {
  EvalResult r;
  r.count = data.size();
  if (data.empty()) return r;
  std::size_t hit1 = 0, hit5 = 0;
  for (const auto& seq : data) {
    const auto logits = forward(model, seq);
    const auto label = static_cast<std::size_t>(seq.label());
    if (label >= logits.size()) throw ModelError("label out of range for model");
    r.loss += softmax_cross_entropy(logits, label, nullptr);
    if (in_top_k(logits, label, 1)) ++hit1;
    if (in_top_k(logits, label, 5)) ++hit5;
  }
  const double n = static_cast<double>(data.size());
  r.loss /= n;
  r.top1 = static_cast<double>(hit1) / n;
  r.top5 = static_cast<double>(hit5) / n;
  return r;
}

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch SGD on softmax cross-entropy. Batches are drawn from a shuffle
/// seeded by (seed, epoch), so the run is a pure function of its inputs.
/// Throws TrainingDiverged as soon as a batch loss is non-finite. When the
/// model asks for input normalization it is fitted to `train_set` first.
inline TrainResult train(Model model, std::span<const SkeletonSequence> train_set,
                         std::span<const SkeletonSequence> val_set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw SpecError("training set is empty");
  if (cfg.batch == 0) throw SpecError("batch size must be positive");
  if (model.config.input_norm) fit_input_normalization(model, train_set);
  SgdMomentum opt(cfg.sgd);
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::vector<const SkeletonSequence*> batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xB000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train_set[order[k]]);
      Model grad = model.zeros_like();
      const double loss = batch_loss(model, batch, &grad, &correct);
      if (!std::isfinite(loss))
        throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(batch.size());
      opt.step(model, grad);
    }
    const double n = static_cast<double>(train_set.size());
    EpochMetrics tm{epoch, "train", loss_sum / n, static_cast<double>(correct) / n, opt.lr()};
    result.metrics.push_back(tm);
    if (on_epoch) on_epoch(tm);
    if (!val_set.empty()) {
      const auto ev = evaluate(model, val_set);
      EpochMetrics vm{epoch, "val", ev.loss, ev.top1, opt.lr()};
      result.metrics.push_back(vm);
      if (on_epoch) on_epoch(vm);
    }
  }
  result.model = std::move(model);
  return result;
}

/// CSV `epoch,split,loss,accuracy,lr`.
inline std::string metrics_to_csv(std::span<const EpochMetrics> metrics) {
  std::string out = "epoch,split,loss,accuracy,lr\n";
  for (const auto& m : metrics)
    out += std::to_string(m.epoch) + "," + m.split + "," + format_double(m.loss) + "," + format_double(m.accuracy) +
           "," + format_double(m.lr) + "\n";
  return out;
}

/// Stratified split: per class, a seeded shuffle sends round(fraction * n)
/// sequences to the held-out set. Both outputs keep the input order.
inline std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>> split_holdout(
    std::span<const SkeletonSequence> data, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw SpecError("holdout fraction must lie in [0, 1)");
  int max_label = 0;
  for (const auto& s : data) max_label = std::max(max_label, s.label());
  std::vector<char> held(data.size(), 0);
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].label() == c) idx.push_back(i);
    std::mt19937_64 rng(mix_seed(seed, 0xC000 + static_cast<std::uint64_t>(c)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = round_half_up(holdout_fraction * static_cast<double>(idx.size()));
    for (std::size_t k = 0; k < n && k < idx.size(); ++k) held[idx[k]] = 1;
  }
  std::pair<std::vector<SkeletonSequence>, std::vector<SkeletonSequence>> out;
  for (std::size_t i = 0; i < data.size(); ++i) (held[i] ? out.second : out.first).push_back(data[i]);
  return out;
}

}  // namespace sapview
