#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"

namespace testing_support {

using namespace sapview;

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(SAPVIEW_FIXTURES) / name; }

/// Fresh, empty scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(SAPVIEW_SCRATCH) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double x = u(rng), y = u(rng), z = u(rng);
  return {x, y, z};
}

/// Uniformly random rotation from a normalized quaternion.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
  const double s = 1.0 / std::sqrt(w * w + x * x + y * y + z * z);
  w *= s, x *= s, y *= s, z *= s;
  Mat3 r;
  r(0, 0) = 1 - 2 * (y * y + z * z), r(0, 1) = 2 * (x * y - w * z), r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z), r(1, 1) = 1 - 2 * (x * x + z * z), r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y), r(2, 1) = 2 * (y * z + w * x), r(2, 2) = 1 - 2 * (x * x + y * y);
  return r;
}

inline std::vector<Bone> chain_bones(std::size_t joints) {
  std::vector<Bone> b;
  for (std::size_t j = 1; j < joints; ++j) b.push_back({j - 1, j});
  return b;
}

inline SkeletonSequence random_sequence(std::mt19937_64& rng, std::size_t frames, std::size_t joints, int label = 0) {
  SkeletonSequence s(frames, joints, chain_bones(joints), label);
  for (auto& p : s.coords()) p = random_vec(rng);
  return s;
}

/// Nearest-centroid classifier over body-frame coordinates: each sequence is
/// translated so its mean pelvis (joint 0) is the origin and rotated about the
/// vertical axis so the mean elbow-to-elbow vector (joint 3 -> joint 5) points
/// along +x. `dims` = 2 keeps (x, y) only, 3 keeps everything. Returns the
/// accuracy of classifying the same data the centroids came from.
inline double body_frame_centroid_accuracy(const std::vector<SkeletonSequence>& data, int dims) {
  auto features = [&](const SkeletonSequence& s) {
    Vec3 pelvis, across;
    for (std::size_t t = 0; t < s.frames(); ++t) {
      pelvis += s.at(t, 0);
      across += s.at(t, 5) - s.at(t, 3);
    }
    pelvis *= 1.0 / static_cast<double>(s.frames());
    const double c = std::cos(std::atan2(across.z, across.x)), sn = std::sin(std::atan2(across.z, across.x));
    std::vector<double> f;
    for (const auto& p : s.coords()) {
      const Vec3 q = p - pelvis;
      // rotation about y by atan2(z, x): x' = c x + s z, z' = -s x + c z
      const double local[3] = {c * q.x + sn * q.z, q.y, -sn * q.x + c * q.z};
      for (int k = 0; k < dims; ++k) f.push_back(local[k]);
    }
    return f;
  };
  std::map<int, std::vector<double>> centroid;
  std::map<int, double> count;
  std::vector<std::vector<double>> feats;
  for (const auto& s : data) {
    feats.push_back(features(s));
    auto& c = centroid[s.label()];
    if (c.empty()) c.assign(feats.back().size(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += feats.back()[i];
    count[s.label()] += 1.0;
  }
  for (auto& [label, c] : centroid)
    for (auto& v : c) v /= count[label];
  std::size_t hits = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    int best = -1;
    double best_d = INFINITY;
    for (const auto& [label, c] : centroid) {
      double d = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) d += (feats[n][i] - c[i]) * (feats[n][i] - c[i]);
      if (d < best_d) best_d = d, best = label;
    }
    hits += best == data[n].label();
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace testing_support
