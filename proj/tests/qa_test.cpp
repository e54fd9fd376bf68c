#include <sstream>

#include <gtest/gtest.h>

#include "ntee/gradcheck.hpp"
#include "ntee/qa.hpp"
#include "synthetic.hpp"

namespace ntee {
namespace {

TEST(QaDataset, PerAnswerSplitSizes) {
  Rng rng(1);
  const auto qs = testing::qa_questions(1);
  const auto ds = build_qa_dataset(qs, 5, rng);
  EXPECT_EQ(ds.answers.size(), 5u);
  EXPECT_EQ(ds.train.size(), 30u);
  EXPECT_EQ(ds.dev.size(), 10u);
  EXPECT_EQ(ds.test.size(), 10u);
  for (const auto& a : ds.answers) {
    auto count = [&](const std::vector<QaExample>& xs) {
      return std::count_if(xs.begin(), xs.end(), [&](const QaExample& x) { return x.answer == a; });
    };
    EXPECT_EQ(count(ds.train), 6);
    EXPECT_EQ(count(ds.dev), 2);
    EXPECT_EQ(count(ds.test), 2);
  }
}

TEST(QaDataset, MinimumCountAndSmallAnswers) {
  std::vector<QaExample> qs{{"q1", "A"}, {"q2", "A"}, {"q3", "A"}, {"q4", "B"}};
  Rng rng(1);
  const auto ds = build_qa_dataset(qs, 2, rng);
  EXPECT_EQ(ds.answers, (std::vector<std::string>{"A"}));
  EXPECT_EQ(ds.train.size(), 3u);  // floor(0.6) = 0 for dev and test
  EXPECT_THROW(build_qa_dataset(qs, 10, rng), std::runtime_error);
}

TEST(QaDataset, RoundTripAndSplitNames) {
  Rng rng(2);
  const auto ds = build_qa_dataset(testing::qa_questions(2), 5, rng);
  std::stringstream ss;
  save_qa_dataset(ss, ds);
  auto back = load_qa_dataset(ss);
  EXPECT_EQ(back, ds);
  EXPECT_THROW(split_of(ds, "validation"), std::invalid_argument);
  std::istringstream bad(R"({"question":"q","answer":"A","split":"holdout"})");
  EXPECT_THROW(load_qa_dataset(bad), std::runtime_error);
}

TEST(QaFeatures, Layout) {
  const Vec f = qa_features(Vec{0.6, 0.8}, Vec{1.0, 2.0});
  EXPECT_EQ(f, (Vec{0.6, 0.8, 1.0, 2.0, 2.2}));
  const Mat t(1, 2, 0.0);
  EXPECT_EQ(unit_row(t, 0), (Vec{0.0, 0.0}));
  EXPECT_EQ(unit_row(t, std::nullopt), (Vec{0.0, 0.0}));
}

TEST(QaGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u})
    for (const auto& e : gradcheck_qa(seed, 1e-5)) EXPECT_LE(e.max_relative_error, 1e-4) << e.group;
}

struct QaWorld {
  std::vector<QaExample> questions;
  Vocabulary vocab;
  NteeModel model;
};

QaWorld qa_world(std::uint64_t seed) {
  auto qs = testing::qa_questions(seed);
  const auto docs = testing::qa_corpus(qs);
  auto vocab = build_vocab(docs, {1, 1});
  Rng rng(seed, 7);
  auto model = make_random_model(vocab.num_words(), vocab.num_entities(), 8, rng);
  return {std::move(qs), std::move(vocab), std::move(model)};
}

TEST(QaTraining, FitsTrainingSplitAndUpdatesEmbeddings) {
  auto w = qa_world(3);
  Rng rng(3);
  auto ds = build_qa_dataset(w.questions, 5, rng);
  ds.dev.clear();  // rank epochs by training accuracy
  MlpConfig cfg;
  cfg.hidden_units = 32;
  cfg.epochs = 100;
  cfg.batch_size = 10;
  const auto res = train_qa(w.model, w.vocab, cfg, ds, rng);
  EXPECT_EQ(res.best_score, 1.0);
  EXPECT_EQ(evaluate_qa(res.mlp, res.model, w.vocab, ds.answers, ds.train), 1.0);
  EXPECT_NE(res.model.word_emb, w.model.word_emb);
  EXPECT_NE(res.model.entity_emb, w.model.entity_emb);
  EXPECT_NE(res.model.W, w.model.W);
}

TEST(QaTraining, FrozenModeLeavesModelUnchangedAndIsDeterministic) {
  auto w = qa_world(4);
  Rng r0(4);
  const auto ds = build_qa_dataset(w.questions, 5, r0);
  MlpConfig cfg;
  cfg.hidden_units = 16;
  cfg.epochs = 5;
  Rng r1(9), r2(9);
  const auto a = train_qa(w.model, w.vocab, cfg, ds, r1, false);
  const auto b = train_qa(w.model, w.vocab, cfg, ds, r2, false);
  EXPECT_EQ(a.model, w.model);
  EXPECT_EQ(a.mlp, b.mlp);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(QaTraining, UnknownQuestionWordsEncodeToBias) {
  auto w = qa_world(5);
  const Vec f = featurize_question(w.model, w.vocab, "completely unseen tokens", "Answer_0");
  const std::size_t d = w.model.dim();
  for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(f[d + i], w.model.b[i]);
}

}  // namespace
}  // namespace ntee
