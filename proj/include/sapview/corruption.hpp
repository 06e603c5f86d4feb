#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"

namespace sapview {

enum class CorruptionKind { none, rotation, remove_joints, disturb_joints };

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::rotation: return "rotation";
    case CorruptionKind::remove_joints: return "remove_joints";
    case CorruptionKind::disturb_joints: return "disturb_joints";
  }
  return "none";
}

inline CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "none") return CorruptionKind::none;
  if (s == "rotation") return CorruptionKind::rotation;
  if (s == "remove_joints") return CorruptionKind::remove_joints;
  if (s == "disturb_joints") return CorruptionKind::disturb_joints;
  throw SpecError("unknown corruption kind '" + s + "'");
}

/// Robustness protocol parameters. Only the fields relevant to `kind` are read.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::none;
  double rotation_bound = 0.0;  // radians, per-axis uniform in [-bound, bound]
  double affected_frame_fraction = 0.0;
  std::size_t joints_per_frame = 0;
  double noise_mean = 0.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

inline void validate(const CorruptionSpec& spec, std::size_t joints) {
  switch (spec.kind) {
    case CorruptionKind::none: return;
    case CorruptionKind::rotation:
      if (!(spec.rotation_bound >= 0.0) || !std::isfinite(spec.rotation_bound))
        throw SpecError("rotation_bound must be finite and >= 0");
      return;
    case CorruptionKind::disturb_joints:
      if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std) || !std::isfinite(spec.noise_mean))
        throw SpecError("noise parameters must be finite with noise_std >= 0");
      [[fallthrough]];
    case CorruptionKind::remove_joints:
      if (!(spec.affected_frame_fraction >= 0.0 && spec.affected_frame_fraction <= 1.0))
        throw SpecError("affected_frame_fraction must lie in [0, 1]");
      if (spec.joints_per_frame > joints)
        throw SpecError("joints_per_frame " + std::to_string(spec.joints_per_frame) + " exceeds J = " +
                        std::to_string(joints));
      return;
  }
}

namespace detail {

/// First `count` entries of a seeded shuffle of 0..n-1 (sampling without
/// replacement), returned in ascending order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Applies one robustness protocol. Deterministic in (seq, spec).
///
/// rotation: three per-axis angles drawn once per sequence, composed as
/// Rx * Ry * Rz and applied about the sensor origin to every frame.
/// remove_joints: in round(fraction * T) sampled frames, `joints_per_frame`
/// distinct joints are zeroed and masked invalid.
/// disturb_joints: same sampling; each chosen coordinate gets additive
/// Gaussian noise N(noise_mean, noise_std^2).
inline SkeletonSequence corrupt(const SkeletonSequence& seq, const CorruptionSpec& spec) {
  validate(spec, seq.joints());
  SkeletonSequence out = seq;
  std::mt19937_64 rng(spec.seed);

  switch (spec.kind) {
    case CorruptionKind::none: break;
    case CorruptionKind::rotation: {
      std::uniform_real_distribution<double> angle(-spec.rotation_bound, spec.rotation_bound);
      const double ax = angle(rng), ay = angle(rng), az = angle(rng);
      const Mat3 r = rotation_x(ax) * rotation_y(ay) * rotation_z(az);
      for (auto& p : out.coords()) p = r * p;
      break;
    }
    case CorruptionKind::remove_joints:
    case CorruptionKind::disturb_joints: {
      const auto n_frames =
          std::min(seq.frames(), round_half_up(spec.affected_frame_fraction * static_cast<double>(seq.frames())));
      const auto frames = detail::sample_indices(seq.frames(), n_frames, rng);
      std::normal_distribution<double> noise(spec.noise_mean, spec.noise_std);
      for (auto t : frames) {
        const auto joints = detail::sample_indices(seq.joints(), spec.joints_per_frame, rng);
        for (auto j : joints) {
          if (spec.kind == CorruptionKind::remove_joints) {
            out.at(t, j) = Vec3{};
            out.set_valid(t, j, false);
          } else {
            for (std::size_t c = 0; c < 3; ++c) out.at(t, j)[c] += noise(rng);
          }
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace sapview
