#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "sapview/core.hpp"
#include "sapview/skeleton.hpp"

namespace sapview {

struct SyntheticDatasetSpec {
  std::size_t num_classes = 4;
  std::size_t sequences_per_class = 100;
  std::size_t frames = 64;
  std::size_t joints = 11;
  /// 0: the pair-distinguishing limb offset lies in the frontal (x-y) plane;
  /// 1: it lies purely along the sensor's depth axis.
  double view_ambiguity = 0.9;
  std::uint64_t seed = 42;

  friend bool operator==(const SyntheticDatasetSpec&, const SyntheticDatasetSpec&) = default;
};

namespace synth {

// Body-local frame: x lateral, y up, z away from the sensor.
struct TemplateJoint {
  std::size_t parent;
  Vec3 rest;
};

inline constexpr std::size_t kCoreJoints = 11;

//  0 pelvis   1 chest    2 head
//  3 r_elbow  4 r_hand   5 l_elbow  6 l_hand
//  7 r_knee   8 r_foot   9 l_knee  10 l_foot
inline constexpr std::array<TemplateJoint, kCoreJoints> kCore = {{
    {0, {0.0, 0.0, 0.0}},
    {0, {0.0, 0.5, 0.0}},
    {1, {0.0, 0.78, 0.0}},
    {1, {-0.22, 0.25, 0.0}},
    {3, {-0.24, 0.0, 0.0}},
    {1, {0.22, 0.25, 0.0}},
    {5, {0.24, 0.0, 0.0}},
    {0, {-0.1, -0.45, 0.0}},
    {7, {-0.1, -0.9, 0.0}},
    {0, {0.1, -0.45, 0.0}},
    {9, {0.1, -0.9, 0.0}},
}};

// (middle joint, end effector) per limb: right arm, left arm, right leg, left leg.
inline constexpr std::array<std::array<std::size_t, 2>, 4> kLimbs = {{{3, 4}, {5, 6}, {7, 8}, {9, 10}}};
inline constexpr std::array<std::size_t, 4> kEffectors = {4, 6, 8, 10};

inline std::size_t parent_of(std::size_t j) {
  if (j < kCoreJoints) return kCore[j].parent;
  // Extra joints extend the end effectors round-robin, one segment per pass.
  const std::size_t k = j - kCoreJoints;
  return k < 4 ? kEffectors[k] : j - 4;
}

inline std::vector<Bone> template_bones(std::size_t joints) {
  std::vector<Bone> bones;
  for (std::size_t j = 1; j < joints; ++j) bones.push_back({parent_of(j), j});
  return bones;
}

inline std::size_t limbs_available(std::size_t joints) {
  std::size_t n = 0;
  for (const auto& l : kLimbs)
    if (l[1] < joints) ++n;
  return n;
}

}  // namespace synth

inline std::vector<Bone> synthetic_bones(std::size_t joints) { return synth::template_bones(joints); }

/// Generates a labelled dataset of single-body sequences. Classes come in
/// pairs sharing a base motion; the two members of a pair differ only by an
/// offset of one limb's trajectory along a direction that rotates from the
/// frontal plane (view_ambiguity = 0) into the depth axis (view_ambiguity = 1).
/// Each sequence also gets a random position in front of the sensor, a small
/// yaw, a body scale, timing jitter, idle motion of the other limbs and sensor
/// noise. Output is ordered class-major and fully determined by the spec.
inline std::vector<SkeletonSequence> generate_synthetic(const SyntheticDatasetSpec& spec) {
  if (spec.joints < 5) throw SpecError("synthetic skeleton needs J >= 5 (torso plus one articulated limb)");
  if (spec.num_classes < 2) throw SpecError("num_classes must be >= 2");
  if (spec.sequences_per_class < 1) throw SpecError("sequences_per_class must be >= 1");
  if (spec.frames < 1) throw SpecError("frames must be >= 1");
  if (!(spec.view_ambiguity >= 0.0 && spec.view_ambiguity <= 1.0))
    throw SpecError("view_ambiguity must lie in [0, 1]");

  constexpr double kPi = std::numbers::pi;
  const std::size_t J = spec.joints;
  const std::size_t n_limbs = synth::limbs_available(J);
  const auto bones = synth::template_bones(J);

  struct BaseMotion {
    std::size_t limb;
    double freq;
    double amplitude;
    Vec3 direction;  // unit, frontal plane
  };
  const std::size_t n_pairs = (spec.num_classes + 1) / 2;
  std::vector<BaseMotion> bases;
  for (std::size_t b = 0; b < n_pairs; ++b) {
    std::mt19937_64 rng(mix_seed(spec.seed, 0x1000 + b));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    BaseMotion m;
    m.limb = b % n_limbs;
    m.freq = 1.0 + u01(rng);
    m.amplitude = 0.25 + 0.15 * u01(rng);
    const double beta = kPi * (0.25 + 0.5 * u01(rng));
    m.direction = {std::cos(beta), std::sin(beta), 0.0};
    bases.push_back(m);
  }

  const double theta = spec.view_ambiguity * kPi / 2.0;
  const Vec3 offset_dir{std::cos(theta), 0.0, std::sin(theta)};
  constexpr double kOffset = 0.2;

  std::vector<SkeletonSequence> out;
  out.reserve(spec.num_classes * spec.sequences_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto& base = bases[c / 2];
    const double sign = (c % 2 == 0) ? -1.0 : 1.0;
    for (std::size_t k = 0; k < spec.sequences_per_class; ++k) {
      std::mt19937_64 rng(mix_seed(spec.seed, c * spec.sequences_per_class + k));
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
      std::normal_distribution<double> sensor(0.0, 0.01);

      const Vec3 position{uni(-1.0, 1.0), uni(-0.3, 0.3), uni(2.5, 4.0)};
      const Mat3 yaw = rotation_y(uni(-kPi / 4.0, kPi / 4.0));
      const double scale = uni(0.85, 1.15);
      const double phase = uni(-0.3, 0.3);
      const double freq = base.freq * uni(0.9, 1.1);
      const double amp = base.amplitude * uni(0.85, 1.15);
      std::array<double, 4> idle_amp{}, idle_freq{}, idle_phase{};
      for (std::size_t l = 0; l < 4; ++l) {
        idle_amp[l] = uni(0.0, 0.08);
        idle_freq[l] = uni(0.5, 2.0);
        idle_phase[l] = uni(0.0, 2.0 * kPi);
      }

      SkeletonSequence seq(spec.frames, J, bones, static_cast<int>(c));
      std::vector<Vec3> local(J);
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const double tau = spec.frames > 1 ? static_cast<double>(t) / static_cast<double>(spec.frames - 1) : 0.0;
        std::vector<Vec3> disp(J);
        for (std::size_t l = 0; l < n_limbs; ++l) {
          const auto [mid, end] = synth::kLimbs[l];
          Vec3 d;
          if (l == base.limb) {
            d = base.direction * (amp * std::sin(2.0 * kPi * freq * tau + phase));
            const double bump = std::sin(kPi * tau) * std::sin(kPi * tau);
            d += offset_dir * (sign * kOffset * bump);
          } else {
            d = Vec3{0.0, 1.0, 0.3} * (idle_amp[l] * std::sin(2.0 * kPi * idle_freq[l] * tau + idle_phase[l]));
          }
          disp[end] += d;
          disp[mid] += d * 0.5;
        }
        for (std::size_t j = 0; j < J; ++j) {
          if (j < synth::kCoreJoints) {
            local[j] = synth::kCore[j].rest + disp[j];
          } else {
            // Extension segments continue rigidly from their parent.
            const std::size_t p = synth::parent_of(j);
            const std::size_t gp = p < synth::kCoreJoints ? synth::kCore[p].parent : synth::parent_of(p);
            Vec3 seg = local[p] - local[gp];
            const double len = norm(seg);
            local[j] = local[p] + (len > 0.0 ? seg * (0.06 / len) : Vec3{0.0, -0.06, 0.0});
          }
        }
        for (std::size_t j = 0; j < J; ++j) {
          Vec3 noise{sensor(rng), sensor(rng), sensor(rng)};
          seq.at(t, j) = position + yaw * (local[j] * scale) + noise;
        }
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

}  // namespace sapview
