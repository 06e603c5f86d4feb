#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sapview/corruption.hpp"
#include "sapview/skeleton.hpp"
#include "sapview/synthetic.hpp"
#include "support.hpp"

using namespace sapview;
using namespace testing_support;

namespace {

std::vector<std::string> expected_lines(const std::string& name) {
  std::ifstream in(fixture(name));
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

// Compares a parsed file against the line reader's dump of the first body.
void expect_matches_reference(const std::string& stem) {
  const auto seq = parse_ntu_skeleton(read_file(fixture(stem + ".skeleton")));
  const auto ref = expected_lines(stem + ".expected");
  ASSERT_EQ(seq.frames(), ref.size());
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    if (ref[t] == "-") {
      for (std::size_t j = 0; j < seq.joints(); ++j) {
        EXPECT_FALSE(seq.valid(t, j));
        EXPECT_EQ(seq.at(t, j), Vec3{});
      }
      continue;
    }
    std::istringstream ss(ref[t]);
    for (std::size_t j = 0; j < seq.joints(); ++j) {
      Vec3 p;
      ss >> p.x >> p.y >> p.z;
      EXPECT_EQ(seq.at(t, j), p) << "frame " << t << " joint " << j;
      EXPECT_TRUE(seq.valid(t, j));
    }
  }
}

}  // namespace

TEST(NtuParser, ZeroFixture) {
  const auto seq = parse_ntu_skeleton(read_file(fixture("ntu_zero.skeleton")));
  EXPECT_EQ(seq.frames(), 2u);
  EXPECT_EQ(seq.joints(), 25u);
  for (const auto& p : seq.coords()) EXPECT_EQ(p, Vec3{});
}

TEST(NtuParser, FirstJointValues) {
  const auto seq = parse_ntu_skeleton(read_file(fixture("ntu_values.skeleton")));
  EXPECT_EQ(seq.at(0, 0), (Vec3{0.1, 0.2, 0.3}));
}

TEST(NtuParser, MatchesLineReader) {
  for (const auto* stem : {"ntu_zero", "ntu_values", "ntu_two_bodies", "ntu_missing_body"}) {
    SCOPED_TRACE(stem);
    expect_matches_reference(stem);
  }
}

TEST(NtuParser, RejectsTwentyJoints) {
  EXPECT_THROW(parse_ntu_skeleton(read_file(fixture("ntu_20_joints.skeleton"))), UnsupportedSkeleton);
}

TEST(NtuParser, MalformedInput) {
  EXPECT_THROW(parse_ntu_skeleton("0\n"), EmptySequence);
  EXPECT_THROW(parse_ntu_skeleton("x\n"), ParseError);
  EXPECT_THROW(parse_ntu_skeleton("1\n1\ninfo\n25\n0.1 0.2\n"), ParseError);
  try {
    parse_ntu_skeleton("1\n1\ninfo\n25\n0.1 0.2\n");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(NtuTemplate, BonesFormTree) {
  const auto bones = ntu_bones();
  ASSERT_EQ(bones.size(), 24u);
  std::vector<int> parent(25, -1);
  for (const auto& b : bones) parent[b.child] = static_cast<int>(b.parent);
  for (std::size_t j = 1; j < 25; ++j) {
    std::size_t hops = 0, k = j;
    while (k != 0 && hops < 25) k = static_cast<std::size_t>(parent[k]), ++hops;
    EXPECT_EQ(k, 0u) << "joint " << j << " not connected to the root";
  }
}

TEST(Skl1, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  auto seq = random_sequence(rng, 7, 5, 3);
  seq.at(2, 1) = {1e-300, -0.1, 1.0 / 3.0};
  seq.set_valid(4, 2, false);
  const auto text = serialize_skl1(seq);
  EXPECT_EQ(parse_skl1(text), seq);
  EXPECT_EQ(serialize_skl1(parse_skl1(text)), text);
}

TEST(Skl1, NtuFixtureRoundTrip) {
  const auto seq = parse_ntu_skeleton(read_file(fixture("ntu_missing_body.skeleton")));
  EXPECT_EQ(parse_skl1(serialize_skl1(seq)), seq);
}

TEST(Skl1, MaskLineOptional) {
  const auto seq = parse_skl1("SKL1 2 1 1 4\n0:1\n0 0 0 1 2 3\n");
  EXPECT_EQ(seq.label(), 4);
  EXPECT_TRUE(seq.valid(0, 1));
  EXPECT_EQ(seq.at(0, 1), (Vec3{1, 2, 3}));
}

TEST(Skl1, Errors) {
  EXPECT_THROW(parse_skl1("SKL2 2 1 0 0\n0 0 0 0 0 0\n"), ParseError);
  EXPECT_THROW(parse_skl1("SKL1 2 1 0 0\n0 0 0 0 0\n"), ParseError);
  EXPECT_THROW(parse_skl1("SKL1 2 0 0 0\n"), EmptySequence);
  EXPECT_THROW(parse_skl1("SKL1 2 1 1 0\n0:5\n0 0 0 0 0 0\n"), SpecError);
  EXPECT_THROW(parse_skl1("SKL1 2 1 0 0\n0 0 0 0 0 0\n1\n"), ParseError);
}

TEST(Manifest, RoundTripAndRelativePaths) {
  const auto dir = scratch_dir("manifest");
  std::mt19937_64 rng(1);
  std::vector<ManifestEntry> entries;
  for (int k = 0; k < 3; ++k) {
    const auto name = "s" + std::to_string(k) + ".skl";
    write_file(dir / name, serialize_skl1(random_sequence(rng, 4, 3)));
    entries.push_back({name, 2 - k});
  }
  const auto text = serialize_manifest(entries);
  EXPECT_EQ(parse_manifest("# comment\n" + text), entries);
  write_file(dir / "manifest.txt", text);
  const auto data = load_manifest(dir / "manifest.txt");
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0].label(), 2);
  EXPECT_EQ(data[2].label(), 0);
  EXPECT_THROW(parse_manifest("only_a_path\n"), ParseError);
}

TEST(Resample, EndpointsAndMidpoints) {
  SkeletonSequence s(2, 2, {{0, 1}});
  s.at(0, 0) = {0, 0, 0};
  s.at(1, 0) = {2, 4, 6};
  s.set_valid(1, 1, false);
  const auto r = resample(s, 3);
  EXPECT_EQ(r.at(0, 0), (Vec3{0, 0, 0}));
  EXPECT_EQ(r.at(1, 0), (Vec3{1, 2, 3}));
  EXPECT_EQ(r.at(2, 0), (Vec3{2, 4, 6}));
  EXPECT_TRUE(r.valid(0, 1));
  EXPECT_FALSE(r.valid(1, 1));
  EXPECT_EQ(resample(s, 2), s);
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

TEST(Corruption, ZeroRotationIsIdentity) {
  std::mt19937_64 rng(2);
  const auto seq = random_sequence(rng, 10, 6);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::rotation;
  spec.rotation_bound = 0.0;
  spec.seed = 99;
  EXPECT_EQ(corrupt(seq, spec), seq);
}

TEST(Corruption, RotationPreservesDistances) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seq = random_sequence(rng, 5, 8);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::rotation;
    spec.rotation_bound = 3.0;
    spec.seed = static_cast<std::uint64_t>(trial);
    const auto out = corrupt(seq, spec);
    for (std::size_t t = 0; t < seq.frames(); ++t)
      for (std::size_t i = 0; i < seq.joints(); ++i)
        for (std::size_t j = i + 1; j < seq.joints(); ++j) {
          const double before = norm(seq.at(t, i) - seq.at(t, j));
          const double after = norm(out.at(t, i) - out.at(t, j));
          EXPECT_NEAR(after, before, 1e-9 * before);
        }
  }
}

TEST(Corruption, RemoveAllJoints) {
  std::mt19937_64 rng(5);
  const auto seq = random_sequence(rng, 6, 25);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::remove_joints;
  spec.affected_frame_fraction = 1.0;
  spec.joints_per_frame = 25;
  const auto out = corrupt(seq, spec);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 25; ++j) {
      EXPECT_FALSE(out.valid(t, j));
      EXPECT_EQ(out.at(t, j), Vec3{});
    }
}

TEST(Corruption, RemoveCountsFramesAndJoints) {
  std::mt19937_64 rng(6);
  const auto seq = random_sequence(rng, 64, 11);
  for (double frac : {0.1, 0.25, 0.5}) {
    CorruptionSpec spec;
    spec.kind = CorruptionKind::remove_joints;
    spec.affected_frame_fraction = frac;
    spec.joints_per_frame = 4;
    spec.seed = 17;
    const auto out = corrupt(seq, spec);
    std::size_t frames_hit = 0;
    for (std::size_t t = 0; t < 64; ++t) {
      std::size_t removed = 0;
      for (std::size_t j = 0; j < 11; ++j) removed += !out.valid(t, j);
      if (removed) {
        ++frames_hit;
        EXPECT_EQ(removed, 4u);
      }
    }
    EXPECT_EQ(frames_hit, round_half_up(frac * 64));
  }
}

TEST(Corruption, DisturbVarianceAndDeterminism) {
  std::mt19937_64 rng(7);
  const auto seq = random_sequence(rng, 400, 25);
  CorruptionSpec spec;
  spec.kind = CorruptionKind::disturb_joints;
  spec.affected_frame_fraction = 1.0;
  spec.joints_per_frame = 10;
  spec.noise_std = 1.0;
  spec.seed = 1234;
  const auto a = corrupt(seq, spec);
  EXPECT_EQ(corrupt(seq, spec), a);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < seq.coords().size(); ++k) {
    const Vec3 d = a.coords()[k] - seq.coords()[k];
    if (d == Vec3{}) continue;
    for (std::size_t c = 0; c < 3; ++c) sum += d[c], sq += d[c] * d[c], ++n;
  }
  ASSERT_GE(n, 10000u);
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(Corruption, Validation) {
  CorruptionSpec spec;
  spec.kind = CorruptionKind::remove_joints;
  spec.affected_frame_fraction = 0.5;
  spec.joints_per_frame = 12;
  EXPECT_THROW(validate(spec, 11), SpecError);
  spec.joints_per_frame = 2;
  spec.affected_frame_fraction = 1.5;
  EXPECT_THROW(validate(spec, 11), SpecError);
  spec.kind = CorruptionKind::rotation;
  spec.rotation_bound = -1.0;
  EXPECT_THROW(validate(spec, 11), SpecError);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

TEST(Synthetic, Deterministic) {
  SyntheticDatasetSpec spec;
  spec.sequences_per_class = 3;
  spec.seed = 7;
  EXPECT_EQ(generate_synthetic(spec), generate_synthetic(spec));
  auto other = spec;
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other), generate_synthetic(spec));
}

TEST(Synthetic, ShapeAndLabels) {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.sequences_per_class = 10;
  spec.joints = 14;
  spec.frames = 20;
  const auto data = generate_synthetic(spec);
  ASSERT_EQ(data.size(), 20u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(data[i].label(), static_cast<int>(i / 10));
    EXPECT_EQ(data[i].joints(), 14u);
    EXPECT_EQ(data[i].frames(), 20u);
    EXPECT_EQ(data[i].bones().size(), 13u);
    data[i].check_finite();
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticDatasetSpec spec;
  spec.joints = 4;
  EXPECT_THROW(generate_synthetic(spec), SpecError);
  spec.joints = 11;
  spec.view_ambiguity = 1.5;
  EXPECT_THROW(generate_synthetic(spec), SpecError);
}

// Thresholds frozen from the first oracle run (seed 42, 4 x 100 sequences):
// ambiguity 0 -> frontal 1.000; ambiguity 1 -> frontal 0.555, full 1.000.
TEST(Synthetic, FrontalProjectionSeparatesAtZeroAmbiguity) {
  SyntheticDatasetSpec spec;
  spec.view_ambiguity = 0.0;
  EXPECT_EQ(body_frame_centroid_accuracy(generate_synthetic(spec), 2), 1.0);
}

TEST(Synthetic, DepthHidesClassesAtFullAmbiguity) {
  SyntheticDatasetSpec spec;
  spec.view_ambiguity = 1.0;
  const auto data = generate_synthetic(spec);
  EXPECT_LE(body_frame_centroid_accuracy(data, 2), 0.60);
  EXPECT_GE(body_frame_centroid_accuracy(data, 3), 0.95);
}
