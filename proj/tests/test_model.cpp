#include <gtest/gtest.h>

#include "sapview/gradcheck.hpp"
#include "sapview/optimizer.hpp"
#include "sapview/synthetic.hpp"
#include "sapview/train.hpp"
#include "support.hpp"

using namespace sapview;
using namespace testing_support;

namespace {

std::vector<const SkeletonSequence*> pointers(const std::vector<SkeletonSequence>& data) {
  std::vector<const SkeletonSequence*> out;
  for (const auto& s : data) out.push_back(&s);
  return out;
}

std::vector<double> flat_params(Model m) {
  std::vector<double> out;
  m.visit([&](const std::string&, Tensor& t, bool) { out.insert(out.end(), t.data.begin(), t.data.end()); });
  return out;
}

std::vector<SkeletonSequence> small_synthetic(std::size_t per_class = 6) {
  SyntheticDatasetSpec spec;
  spec.sequences_per_class = per_class;
  spec.frames = 16;
  return generate_synthetic(spec);
}

ModelConfig synthetic_config(std::array<bool, 3> streams) {
  ModelConfig c;
  c.joints = 11;
  c.num_classes = 4;
  c.bones = synthetic_bones(11);
  c.streams = streams;
  c.sap.pairs = 3;
  c.sap.dim = 4;
  c.widths = {6, 8};
  return c;
}

}  // namespace

TEST(Adjacency, SymmetricNormalizedWithSelfLoops) {
  const auto a = normalized_adjacency(4, chain_bones(4));
  // Degrees with self loops: 2, 3, 3, 2.
  const double deg[4] = {2, 3, 3, 2};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_DOUBLE_EQ(a[i * 4 + j], a[j * 4 + i]);
      const bool linked = i == j || (i > j ? i - j : j - i) == 1;
      EXPECT_DOUBLE_EQ(a[i * 4 + j], linked ? 1.0 / std::sqrt(deg[i] * deg[j]) : 0.0);
    }
  EXPECT_THROW(normalized_adjacency(2, std::vector<Bone>{{0, 2}}), ModelError);
}

TEST(BonesOf, Examples) {
  SkeletonSequence s(1, 2, {{0, 1}});
  EXPECT_EQ(bones_of(s)[0], Vec3{});
  s.at(0, 1) = {1, 0, 0};
  EXPECT_EQ(bones_of(s)[0], (Vec3{1, 0, 0}));
  std::mt19937_64 rng(1);
  const auto r = random_sequence(rng, 3, 5);
  const auto moved = rigid_transform(r, Mat3::identity(), Vec3{3, -2, 7});
  const auto a = bones_of(r), b = bones_of(moved);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(norm(a[k] - b[k]), 0.0, 1e-12);
}

TEST(ModelInput, CentersOnFirstValidRoot) {
  std::mt19937_64 rng(2);
  auto s = random_sequence(rng, 4, 3);
  s.set_valid(0, 0, false);
  ModelConfig cfg = toy_model_config();
  const auto in = model_input(cfg, s);
  EXPECT_EQ(in.at(1, 0), Vec3{});
  EXPECT_EQ(in.at(3, 2), s.at(3, 2) - s.at(1, 0));
  cfg.center_on_root = false;
  EXPECT_EQ(model_input(cfg, s), s);
}

TEST(Forward, ZeroClassifierGivesEqualScores) {
  auto m = Model::init(synthetic_config({true, false, false}), 1);
  m.heads[0].w.fill(0.0);
  m.heads[0].b.fill(0.0);
  const auto logits = forward(m, small_synthetic(1)[0]);
  for (double l : logits) EXPECT_EQ(l, logits[0]);
}

TEST(Forward, ZeroEnsembleWeightDisablesStream) {
  const auto data = small_synthetic(2);
  const auto joints_only = Model::init(synthetic_config({true, false, false}), 3);
  auto cfg = synthetic_config({true, false, true});
  cfg.ensemble_weights = {1.0, 1.0, 0.0};
  const auto both = Model::init(cfg, 3);
  for (const auto& s : data) EXPECT_EQ(forward(both, s), forward(joints_only, s));
}

TEST(Forward, DeterministicThreeStream) {
  const auto data = small_synthetic(2);
  const auto cfg = synthetic_config({true, true, true});
  const auto a = Model::init(cfg, 4), b = Model::init(cfg, 4);
  for (const auto& s : data) EXPECT_EQ(forward(a, s), forward(b, s));
}

TEST(Forward, RejectsWrongJointCount) {
  const auto m = Model::init(synthetic_config({true, false, true}), 1);
  std::mt19937_64 rng(1);
  EXPECT_THROW(forward(m, random_sequence(rng, 4, 5)), ModelError);
}

TEST(Loss, NonNegativeAndGradientSumsToZero) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(6);
    for (auto& l : logits) l = std::uniform_real_distribution<double>(-20, 20)(rng);
    std::vector<double> d;
    const double loss = softmax_cross_entropy(logits, static_cast<std::size_t>(trial % 6), &d);
    EXPECT_GE(loss, 0.0);
    EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 0.0, 1e-12);
  }
}

TEST(Ensemble, ScalingWeightsKeepsArgmax) {
  const auto data = small_synthetic(2);
  auto cfg = synthetic_config({true, true, true});
  cfg.ensemble_weights = {0.7, 1.3, 0.4};
  const auto base = Model::init(cfg, 6);
  auto scaled = base;
  for (auto& w : scaled.ensemble.data) w *= 3.5;
  for (const auto& s : data) EXPECT_EQ(argmax(forward(scaled, s)), argmax(forward(base, s)));
}

TEST(GradCheck, ToyModelPassesEveryConfiguration) {
  const auto data = toy_batch();
  const auto batch = pointers(data);
  for (auto fusion : {FusionStrategy::sum, FusionStrategy::max, FusionStrategy::concatenate, FusionStrategy::attention})
    for (auto mode : {AnchorMode::on_joints, AnchorMode::within_body, AnchorMode::around_body})
      for (auto agg : {Aggregation::score, Aggregation::feature}) {
        auto m = Model::init(toy_model_config(fusion, mode, agg), 1);
        fit_input_normalization(m, data);
        const auto r = verify_gradients(m, batch);
        EXPECT_TRUE(r.passed) << to_string(fusion) << "/" << to_string(mode) << "/" << to_string(agg) << ": "
                              << r.worst_param << " " << r.max_rel_error;
      }
}

TEST(GradCheck, SignFlipFaultIsCaught) {
  const auto data = toy_batch();
  auto m = Model::init(toy_model_config(), 1);
  GradCheckOptions opt;
  opt.fault = [](Model& g) {
    g.visit([](const std::string& name, Tensor& t, bool) {
      if (name == "sap.head0.phi_w")
        for (auto& v : t.data) v = -v;
    });
  };
  const auto r = verify_gradients(m, pointers(data), opt);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_param, "sap.head0.phi_w");
}

TEST(GradCheck, FlatLossHasZeroEnsembleGradient) {
  const auto data = toy_batch();
  auto m = Model::init(toy_model_config(), 2);
  for (auto& h : m.heads) h.w.fill(0.0), h.b.fill(0.0);
  Model g = m.zeros_like();
  batch_loss(m, pointers(data), &g);
  for (double v : g.ensemble.data) EXPECT_EQ(v, 0.0);
  const auto r = verify_gradients(m, pointers(data));
  EXPECT_TRUE(r.passed);
}

TEST(Sgd, ScheduleAndFirstStep) {
  SgdMomentum opt(SgdConfig{});
  EXPECT_DOUBLE_EQ(opt.lr_at(0), 0.05);
  EXPECT_DOUBLE_EQ(opt.lr_at(29), 0.05);
  EXPECT_DOUBLE_EQ(opt.lr_at(30), 0.005);
  EXPECT_DOUBLE_EQ(opt.lr_at(40), 0.0005);

  const auto data = toy_batch();
  auto m = Model::init(toy_model_config(), 3);
  Model g = m.zeros_like();
  batch_loss(m, pointers(data), &g);
  const auto before = flat_params(m), grad = flat_params(g);
  opt.step(m, g);
  const auto after = flat_params(m);
  std::vector<bool> trainable;
  m.visit([&](const std::string&, Tensor& t, bool tr) { trainable.insert(trainable.end(), t.size(), tr); });
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_EQ(after[i], trainable[i] ? before[i] - 0.05 * grad[i] : before[i]);
}

TEST(Sgd, FrozenBackboneOnlyMovesViewParameters) {
  const auto data = toy_batch();
  auto cfg = toy_model_config();
  cfg.freeze_backbone = true;
  auto m = Model::init(cfg, 3);
  const Model before = m;
  Model g = m.zeros_like();
  batch_loss(m, pointers(data), &g);
  SgdMomentum(SgdConfig{}).step(m, g);
  EXPECT_EQ(m.nets[0].graph_w[0].data, before.nets[0].graph_w[0].data);
  EXPECT_NE(m.sap.heads[0].phi_w.data, before.sap.heads[0].phi_w.data);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto data = toy_batch();
  TrainConfig tc;
  tc.epochs = 3;
  tc.sgd.lr = 0.0;
  const auto init = Model::init(toy_model_config(), 4);
  const auto r = train(init, data, {}, tc);
  EXPECT_EQ(flat_params(r.model), flat_params(init));
}

TEST(Train, SmallStepDecreasesRepeatedBatchLoss) {
  const auto data = toy_batch();
  auto cfg = toy_model_config();
  cfg.input_norm = false;
  const auto init = Model::init(cfg, 5);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch = data.size();
  tc.sgd.lr = 1e-4;
  const auto r = train(init, data, {}, tc);
  EXPECT_LT(batch_loss(r.model, pointers(data), nullptr), batch_loss(init, pointers(data), nullptr));
}

TEST(Train, DeterministicAndMetricsShape) {
  const auto data = small_synthetic(4);
  const auto [tr, va] = split_holdout(data, 0.25, 9);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 4;
  tc.seed = 9;
  const auto init = Model::init(synthetic_config({true, false, true}), 9);
  const auto a = train(init, tr, va, tc), b = train(init, tr, va, tc);
  EXPECT_EQ(flat_params(a.model), flat_params(b.model));
  EXPECT_EQ(a.model.norms, b.model.norms);
  EXPECT_EQ(metrics_to_csv(a.metrics), metrics_to_csv(b.metrics));
  ASSERT_EQ(a.metrics.size(), 4u);
  EXPECT_EQ(a.metrics[1].split, "val");
  const auto csv = metrics_to_csv(a.metrics);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,split,loss,accuracy,lr");
}

TEST(Train, NonFiniteLossThrows) {
  auto data = toy_batch();
  data[1].at(1, 2).x = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  auto cfg = toy_model_config();
  cfg.input_norm = false;
  EXPECT_THROW(train(Model::init(cfg, 1), data, {}, tc), TrainingDiverged);
}

TEST(Train, FitsInputNormalization) {
  const auto data = small_synthetic(3);
  TrainConfig tc;
  tc.epochs = 0;
  const auto r = train(Model::init(synthetic_config({true, false, true}), 1), data, {}, tc);
  EXPECT_EQ(r.model.norms[0].mean.size(), 3u);
  EXPECT_TRUE(r.model.norms[1].empty());
  EXPECT_EQ(r.model.norms[2].mean.size(), 3u);
}

TEST(Split, StratifiedDeterministicDisjoint) {
  const auto data = small_synthetic(8);
  const auto [tr, te] = split_holdout(data, 0.25, 42);
  EXPECT_EQ(te.size(), 8u);
  EXPECT_EQ(tr.size(), 24u);
  std::array<int, 4> per_class{};
  for (const auto& s : te) ++per_class[static_cast<std::size_t>(s.label())];
  for (int c : per_class) EXPECT_EQ(c, 2);
  const auto again = split_holdout(data, 0.25, 42);
  EXPECT_EQ(again.second, te);
  for (const auto& a : te)
    for (const auto& b : tr) EXPECT_FALSE(a == b);
  EXPECT_THROW(split_holdout(data, 1.0, 1), SpecError);
}

TEST(Evaluate, TopFiveContainsTopOne) {
  SyntheticDatasetSpec spec;
  spec.num_classes = 8;
  spec.sequences_per_class = 2;
  spec.frames = 8;
  const auto data = generate_synthetic(spec);
  auto cfg = synthetic_config({true, false, false});
  cfg.num_classes = 8;
  const auto r = evaluate(Model::init(cfg, 1), data);
  EXPECT_GE(r.top5, r.top1);
  EXPECT_EQ(r.count, 16u);
}
