#include <cmath>

#include <gtest/gtest.h>

#include "ntee/gradcheck.hpp"
#include "ntee/mlp.hpp"

namespace ntee {
namespace {

MlpModel tiny_mlp() {
  // Two hidden units over two features.
  MlpModel m{Mat(2, 2, 0.0), Vec{0.0, -1.0}, Vec{1.0, 2.0}, 0.5};
  m.W1(0, 0) = 1.0;
  m.W1(1, 1) = 1.0;
  return m;
}

TEST(Mlp, HandEvaluatedLogit) {
  const auto m = tiny_mlp();
  // h = relu([2, 3 - 1]) = [2, 2]; logit = 2 + 4 + 0.5
  EXPECT_DOUBLE_EQ(logit(m, Vec{2.0, 3.0}), 6.5);
  // second unit inactive: relu(0.5 - 1) = 0
  EXPECT_DOUBLE_EQ(logit(m, Vec{-1.0, 0.5}), 0.5);
  EXPECT_THROW(logit(m, Vec{1.0}), std::invalid_argument);
}

TEST(Mlp, DropoutInEvalModeIsIdentityAndTrainModeIsInverted) {
  const auto m = tiny_mlp();
  const Vec f{2.0, 3.0};
  EXPECT_EQ(mlp_forward(m, f, 0.5, nullptr).logit, 6.5);
  Rng rng(3);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto fw = mlp_forward(m, f, 0.5, &rng);
    for (double s : fw.scale) EXPECT_TRUE(s == 0.0 || s == 2.0);
    sum += fw.logit;
  }
  EXPECT_NEAR(sum / n, 6.5, 0.1);  // expectation preserved
}

TEST(Mlp, SoftmaxOverCandidates) {
  const Vec p = softmax_over_candidates(Vec{0.0, std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  const Vec one = softmax_over_candidates(Vec{-7.0});
  EXPECT_EQ(one[0], 1.0);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u})
    for (const auto& e : gradcheck_mlp(seed, 1e-5)) EXPECT_LE(e.max_relative_error, 1e-4) << e.group;
}

TEST(Mlp, SingleCandidateHasZeroLoss) {
  const auto m = tiny_mlp();
  MlpGradient g(m);
  const std::vector<Vec> c{{1.0, 1.0}};
  EXPECT_NEAR(accumulate_mlp_gradient(m, c, 0, 0.0, nullptr, g), 0.0, 1e-15);
  EXPECT_EQ(g.b2, 0.0);
  EXPECT_THROW(accumulate_mlp_gradient(m, c, 1, 0.0, nullptr, g), std::invalid_argument);
  EXPECT_THROW(predict(m, std::vector<Vec>{}), std::invalid_argument);
}

TEST(Mlp, PredictTiesGoToFirst) {
  const auto m = tiny_mlp();
  const std::vector<Vec> c{{1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}};
  EXPECT_EQ(predict(m, c).index, 0u);
}

TEST(Mlp, LearnsSeparableProblemAndIsDeterministic) {
  // Gold candidate has feature[0] = 1, others 0; noise in feature[1].
  Rng data(5);
  std::vector<CandidateSet> examples;
  for (int i = 0; i < 30; ++i) {
    CandidateSet ex;
    ex.gold = data.below(4);
    for (std::size_t j = 0; j < 4; ++j) ex.features.push_back({j == ex.gold ? 1.0 : 0.0, data.uniform(-1, 1)});
    examples.push_back(ex);
  }
  MlpConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs = 60;
  cfg.batch_size = 10;
  Rng i1(1), i2(1), r1(2), r2(2);
  const auto a = train_mlp(make_mlp(2, 8, i1), examples, cfg, r1);
  const auto b = train_mlp(make_mlp(2, 8, i2), examples, cfg, r2);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.best_score, 1.0);
  EXPECT_EQ(candidate_accuracy(a.model, examples), 1.0);
  EXPECT_EQ(a.epoch_scores.size(), 60u);
  EXPECT_EQ(a.epoch_scores[a.best_epoch - 1], a.best_score);
  for (std::size_t e = 0; e + 1 < a.best_epoch; ++e) EXPECT_LT(a.epoch_scores[e], a.best_score);
}

TEST(Mlp, ConfigValidation) {
  MlpConfig cfg;
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.dropout = 0.5;
  cfg.hidden_units = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace ntee
