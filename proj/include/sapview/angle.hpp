#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"

namespace sapview {

inline constexpr double kDefaultAngleEps = 1e-6;

/// One view: the two anchor points that, together with a joint C, form the
/// triplet whose angle at C is the joint's value in this view.
struct AnchorPair {
  Vec3 a;
  Vec3 b;
  friend bool operator==(const AnchorPair&, const AnchorPair&) = default;
};

/// cos of the angle A-C-B, i.e. (C-A).(C-B) / (|C-A||C-B|), clamped to [-1, 1].
/// Zero when C lies within `eps` of either anchor.
inline double angle_of(const Vec3& joint, const AnchorPair& pair, double eps = kDefaultAngleEps) {
  const Vec3 u = joint - pair.a;
  const Vec3 v = joint - pair.b;
  const double nu = norm(u), nv = norm(v);
  if (nu < eps || nv < eps) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

struct AngleGradient {
  Vec3 joint;
  Vec3 a;
  Vec3 b;
};

/// Partial derivatives of angle_of w.r.t. the joint and both anchors. Zero on
/// the degenerate branch. The clamp is ignored (it only ever trims ulps).
inline AngleGradient angle_gradient(const Vec3& joint, const AnchorPair& pair, double eps = kDefaultAngleEps) {
  const Vec3 u = joint - pair.a;
  const Vec3 v = joint - pair.b;
  const double nu = norm(u), nv = norm(v);
  if (nu < eps || nv < eps) return {};
  const double inv = 1.0 / (nu * nv);
  const double c = dot(u, v) * inv;
  const Vec3 du = v * inv - u * (c / (nu * nu));
  const Vec3 dv = u * inv - v * (c / (nv * nv));
  return {du + dv, -du, -dv};
}

/// The angle stream: values[m][t][j] for M views, T frames, J joints. The
/// bone graph of the source sequence is carried along unchanged.
class AngleTensor {
 public:
  AngleTensor() = default;
  AngleTensor(std::size_t views, std::size_t frames, std::size_t joints)
      : views_(views), frames_(frames), joints_(joints), values_(views * frames * joints, 0.0) {}

  std::size_t views() const noexcept { return views_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t joints() const noexcept { return joints_; }

  double& operator()(std::size_t m, std::size_t t, std::size_t j) { return values_[(m * frames_ + t) * joints_ + j]; }
  double operator()(std::size_t m, std::size_t t, std::size_t j) const {
    return values_[(m * frames_ + t) * joints_ + j];
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::vector<AnchorPair> source_views;
  std::vector<Bone> bones;

 private:
  std::size_t views_ = 0;
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<double> values_;
};

/// Maps a sequence into the angle stream of every view. Anchors are constant
/// over the sequence.
inline AngleTensor view_translate(const SkeletonSequence& seq, std::span<const AnchorPair> views,
                                  double eps = kDefaultAngleEps) {
  if (views.empty()) throw SpecError("view_translate needs at least one view");
  AngleTensor out(views.size(), seq.frames(), seq.joints());
  for (std::size_t m = 0; m < views.size(); ++m)
    for (std::size_t t = 0; t < seq.frames(); ++t)
      for (std::size_t j = 0; j < seq.joints(); ++j) out(m, t, j) = angle_of(seq.at(t, j), views[m], eps);
  out.source_views.assign(views.begin(), views.end());
  out.bones = seq.bones();
  return out;
}

/// Backward of view_translate w.r.t. the anchors. `upstream` has the layout of
/// AngleTensor::values(); the result holds dL/dA and dL/dB per view.
inline std::vector<AnchorPair> view_translate_backward(const SkeletonSequence& seq, std::span<const AnchorPair> views,
                                                       std::span<const double> upstream,
                                                       double eps = kDefaultAngleEps) {
  const std::size_t T = seq.frames(), J = seq.joints();
  if (upstream.size() != views.size() * T * J) throw ModelError("angle gradient has wrong size");
  std::vector<AnchorPair> grads(views.size());
  for (std::size_t m = 0; m < views.size(); ++m)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < J; ++j) {
        const double g = upstream[(m * T + t) * J + j];
        if (g == 0.0) continue;
        const auto d = angle_gradient(seq.at(t, j), views[m], eps);
        grads[m].a += d.a * g;
        grads[m].b += d.b * g;
      }
  return grads;
}

// ---------------------------------------------------------------------------
// Rigid transforms (test utility for the invariance properties)
// ---------------------------------------------------------------------------

inline void check_rotation(const Mat3& r) {
  const Mat3 p = r.transposed() * r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (std::abs(p(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9) throw GeometryError("rotation is not orthonormal");
}

inline Vec3 rigid_transform(const Vec3& p, const Mat3& r, const Vec3& t) { return r * p + t; }

inline SkeletonSequence rigid_transform(const SkeletonSequence& seq, const Mat3& r, const Vec3& t) {
  check_rotation(r);
  SkeletonSequence out = seq;
  for (auto& p : out.coords()) p = r * p + t;
  return out;
}

inline std::vector<AnchorPair> rigid_transform(std::span<const AnchorPair> views, const Mat3& r, const Vec3& t) {
  check_rotation(r);
  std::vector<AnchorPair> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back({r * v.a + t, r * v.b + t});
  return out;
}

/// CSV `view,frame,joint,value`.
inline std::string angles_to_csv(const AngleTensor& angles) {
  std::string out = "view,frame,joint,value\n";
  for (std::size_t m = 0; m < angles.views(); ++m)
    for (std::size_t t = 0; t < angles.frames(); ++t)
      for (std::size_t j = 0; j < angles.joints(); ++j)
        out += std::to_string(m) + "," + std::to_string(t) + "," + std::to_string(j) + "," +
               format_double(angles(m, t, j)) + "\n";
  return out;
}

}  // namespace sapview
