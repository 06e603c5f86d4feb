#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sapview/core.hpp"

namespace sapview {

/// Dense row-major parameter tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(count(shape), 0.0) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double* ptr() noexcept { return data.data(); }
  const double* ptr() const noexcept { return data.data(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  void uniform(std::mt19937_64& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : data) v = dist(rng);
  }

  std::string shape_string() const {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// A named reference to one parameter tensor inside a model.
struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool trainable;
};

}  // namespace sapview
