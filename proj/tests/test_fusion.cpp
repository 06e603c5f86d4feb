#include <gtest/gtest.h>

#include "sapview/fusion.hpp"
#include "support.hpp"

using namespace sapview;
using namespace testing_support;

namespace {

constexpr std::array<FusionStrategy, 4> kAll{FusionStrategy::sum, FusionStrategy::max, FusionStrategy::concatenate,
                                             FusionStrategy::attention};

AngleTensor random_angles(std::mt19937_64& rng, std::size_t m, std::size_t t, std::size_t j) {
  AngleTensor a(m, t, j);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : a.values()) v = u(rng);
  return a;
}

FusionParams make(FusionStrategy s, std::size_t views, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = FusionParams::init(s, views, rng);
  if (s == FusionStrategy::attention) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : p.b1.data) v = u(rng);
    for (auto& v : p.b2.data) v = u(rng);
  }
  return p;
}

AngleTensor permute_views(const AngleTensor& a, const std::vector<std::size_t>& perm) {
  AngleTensor out(a.views(), a.frames(), a.joints());
  for (std::size_t m = 0; m < a.views(); ++m)
    for (std::size_t t = 0; t < a.frames(); ++t)
      for (std::size_t j = 0; j < a.joints(); ++j) out(m, t, j) = a(perm[m], t, j);
  return out;
}

}  // namespace

TEST(Fuse, SingleViewSumIsIdentity) {
  std::mt19937_64 rng(1);
  const auto a = random_angles(rng, 1, 4, 3);
  EXPECT_EQ(fuse(a, make(FusionStrategy::sum, 1, 1)).values, a.values());
}

TEST(Fuse, OppositeViewsCancel) {
  std::mt19937_64 rng(2);
  auto a = random_angles(rng, 2, 3, 4);
  for (std::size_t k = 0; k < 12; ++k) a.values()[12 + k] = -a.values()[k];
  for (double v : fuse(a, make(FusionStrategy::sum, 2, 1)).values) EXPECT_EQ(v, 0.0);
}

TEST(Fuse, ZeroAttentionGateIsHalf) {
  std::mt19937_64 rng(3);
  const auto a = random_angles(rng, 4, 3, 5);
  auto p = make(FusionStrategy::attention, 4, 3);
  p.visit([](const std::string&, Tensor& t, bool) { t.fill(0.0); });
  for (double g : attention_factors(a, p)) EXPECT_EQ(g, 0.5);
  const auto out = fuse(a, p);
  for (std::size_t k = 0; k < out.values.size(); ++k) EXPECT_EQ(out.values[k], 0.5 * a.values()[k]);
}

TEST(Fuse, ChannelCounts) {
  std::mt19937_64 rng(4);
  const auto a = random_angles(rng, 5, 2, 3);
  EXPECT_EQ(fuse(a, make(FusionStrategy::sum, 5, 1)).channels, 1u);
  EXPECT_EQ(fuse(a, make(FusionStrategy::max, 5, 1)).channels, 1u);
  EXPECT_EQ(fuse(a, make(FusionStrategy::concatenate, 5, 1)).channels, 5u);
  EXPECT_EQ(fuse(a, make(FusionStrategy::attention, 5, 1)).channels, 5u);
  EXPECT_THROW(fuse(a, make(FusionStrategy::sum, 4, 1)), ModelError);
}

TEST(FusionParams, AttentionParamsOnlyForAttention) {
  for (auto s : kAll) {
    auto p = make(s, 6, 1);
    std::size_t n = 0;
    p.visit([&](const std::string&, Tensor& t, bool) { n += t.size(); });
    if (s == FusionStrategy::attention) {
      EXPECT_EQ(p.squeeze(), 3u);
      EXPECT_EQ(n, 3u * 6u + 3u + 6u * 3u + 6u);
    } else {
      EXPECT_EQ(n, 0u);
    }
  }
  EXPECT_EQ(FusionParams::default_squeeze(1), 1u);
}

TEST(FuseInvariants, PermutationAndBounds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t M = 2 + static_cast<std::size_t>(trial % 6);
    const auto a = random_angles(rng, M, 4, 5);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto pa = permute_views(a, perm);
    for (auto s : kAll) {
      auto p = make(s, M, static_cast<std::uint64_t>(trial));
      const auto out = fuse(a, p);
      for (double v : out.values) {
        ASSERT_TRUE(std::isfinite(v));
        if (s != FusionStrategy::concatenate) EXPECT_LE(std::abs(v), static_cast<double>(M));
      }
      if (s == FusionStrategy::sum || s == FusionStrategy::max) {
        const auto po = fuse(pa, p);
        for (std::size_t k = 0; k < out.values.size(); ++k) EXPECT_NEAR(po.values[k], out.values[k], 1e-12);
        continue;
      }
      auto pp = p;
      if (s == FusionStrategy::attention) {
        const std::size_t S = p.squeeze();
        for (std::size_t m = 0; m < M; ++m) {
          for (std::size_t r = 0; r < S; ++r) pp.w1[r * M + m] = p.w1[r * M + perm[m]];
          for (std::size_t r = 0; r < S; ++r) pp.w2[m * S + r] = p.w2[perm[m] * S + r];
          pp.b2[m] = p.b2[perm[m]];
        }
        for (double g : attention_factors(a, p)) {
          EXPECT_GT(g, 0.0);
          EXPECT_LT(g, 1.0);
        }
      }
      const auto po = fuse(pa, pp);
      const std::size_t TJ = 20;
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < TJ; ++k) EXPECT_NEAR(po.values[m * TJ + k], out.values[perm[m] * TJ + k], 1e-12);
    }
  }
}

TEST(FuseBackward, SumCopiesUpstream) {
  std::mt19937_64 rng(6);
  const auto a = random_angles(rng, 3, 2, 2);
  std::vector<double> up{1, 2, 3, 4};
  const auto g = fuse_backward(a, make(FusionStrategy::sum, 3, 1), up);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(g.angles[m * 4 + k], up[k]);
}

TEST(FuseBackward, MaxRoutesToWinner) {
  AngleTensor a(3, 1, 2);
  a.values() = {0.1, 0.9, 0.5, -0.2, 0.3, 0.4};
  const auto g = fuse_backward(a, make(FusionStrategy::max, 3, 1), std::vector<double>{2.0, 3.0});
  EXPECT_EQ(g.angles, (std::vector<double>{0, 3.0, 2.0, 0, 0, 0}));
  AngleTensor tie(2, 1, 1);
  tie.values() = {0.5, 0.5};
  EXPECT_EQ(fuse_backward(tie, make(FusionStrategy::max, 2, 1), std::vector<double>{1.0}).angles,
            (std::vector<double>{1.0, 0.0}));
}

TEST(FuseBackward, MatchesFiniteDifferences) {
  for (auto s : kAll) {
    SCOPED_TRACE(to_string(s));
    std::mt19937_64 rng(9);
    auto a = random_angles(rng, 4, 3, 3);
    auto p = make(s, 4, 9);
    const auto channels = fused_channels(s, 4);
    std::vector<double> up(channels * 9);
    for (auto& u : up) u = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto loss = [&] {
      const auto out = fuse(a, p);
      double l = 0.0;
      for (std::size_t k = 0; k < up.size(); ++k) l += up[k] * out.values[k];
      return l;
    };
    auto g = fuse_backward(a, p, up);
    const double h = 1e-5;
    auto check = [&](double& x, double analytic, const std::string& what) {
      const double saved = x;
      x = saved + h;
      const double plus = loss();
      x = saved - h;
      const double minus = loss();
      x = saved;
      const double numeric = (plus - minus) / (2 * h);
      EXPECT_LE(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-5}), 1e-4) << what;
    };
    for (std::size_t k = 0; k < a.values().size(); ++k) check(a.values()[k], g.angles[k], "angles");
    std::vector<Tensor*> grads;
    g.params.visit([&](const std::string&, Tensor& t, bool) { grads.push_back(&t); });
    std::size_t idx = 0;
    p.visit([&](const std::string& name, Tensor& t, bool) {
      for (std::size_t i = 0; i < t.size(); ++i) check(t[i], (*grads[idx])[i], name);
      ++idx;
    });
  }
}
