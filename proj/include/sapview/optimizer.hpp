#pragma once

#include <cmath>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/model.hpp"

namespace sapview {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double gamma = 0.1;  // step-decay factor
  std::vector<std::size_t> milestones{30, 40};

  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

/// SGD with heavy-ball momentum and a multi-step learning-rate schedule:
///   v <- momentum * v + (g + weight_decay * p);   p <- p - lr * v
class SgdMomentum {
 public:
  explicit SgdMomentum(SgdConfig cfg) : cfg_(std::move(cfg)) {
    if (!(cfg_.lr >= 0.0)) throw SpecError("learning rate must be >= 0");
  }

  /// Learning rate in effect during (0-based) `epoch`.
  double lr_at(std::size_t epoch) const {
    double lr = cfg_.lr;
    for (auto m : cfg_.milestones)
      if (epoch >= m) lr *= cfg_.gamma;
    return lr;
  }

  void set_epoch(std::size_t epoch) noexcept { epoch_ = epoch; }
  std::size_t epoch() const noexcept { return epoch_; }
  double lr() const { return lr_at(epoch_); }

  const std::vector<std::vector<double>>& buffers() const noexcept { return buffers_; }

  void step(Model& model, Model& grad) {
    auto params = model.parameters();
    auto grads = grad.parameters();
    if (buffers_.empty()) {
      buffers_.resize(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) buffers_[k].assign(params[k].tensor->size(), 0.0);
    }
    const double lr = this->lr();
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params[k].trainable) continue;
      auto& p = params[k].tensor->data;
      const auto& g = grads[k].tensor->data;
      auto& v = buffers_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg_.momentum * v[i] + (g[i] + cfg_.weight_decay * p[i]);
        p[i] -= lr * v[i];
      }
    }
  }

 private:
  SgdConfig cfg_;
  std::size_t epoch_ = 0;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace sapview
