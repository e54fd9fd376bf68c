#include <sstream>

#include <gtest/gtest.h>

#include "cli_runner.hpp"
#include "ntee/model_io.hpp"
#include "synthetic.hpp"

namespace ntee {
namespace {

using testing::read_file;
using testing::run_cli;
using testing::ScratchDir;

ModelBundle small_bundle(bool with_mlp) {
  Rng rng(3);
  Vocabulary v({{"a", 5}, {"b", 5}}, {{"E", 3}, {"F", 3}});
  auto m = make_random_model(2, 2, 3, rng);
  std::optional<MlpModel> mlp;
  if (with_mlp) mlp = make_mlp(7, 4, rng);
  return {std::move(m), std::move(v), std::move(mlp)};
}

std::string serialize(const ModelBundle& b) {
  std::ostringstream out;
  save_model(out, b.model, b.vocab, b.mlp ? &*b.mlp : nullptr);
  return out.str();
}

TEST(ModelFile, RoundTripWithAndWithoutClassifier) {
  for (bool with_mlp : {false, true}) {
    const auto b = small_bundle(with_mlp);
    std::istringstream in(serialize(b));
    const auto back = load_model(in);
    EXPECT_EQ(back.model, b.model);
    EXPECT_EQ(back.vocab, b.vocab);
    EXPECT_EQ(back.mlp, b.mlp);
  }
}

TEST(ModelFile, RejectsCorruptInput) {
  const std::string bytes = serialize(small_bundle(true));
  std::istringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_model(truncated), io::FormatError);

  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  std::istringstream v(wrong_version);
  try {
    load_model(v);
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos);
  }

  std::istringstream trailing(bytes + "x");
  EXPECT_THROW(load_model(trailing), io::FormatError);
  std::istringstream magic("NOPE");
  EXPECT_THROW(load_model(magic), io::FormatError);
}

TEST(ModelFile, RejectsMismatchedVocabulary) {
  auto b = small_bundle(false);
  const Vocabulary wrong({{"a", 5}}, {{"E", 3}, {"F", 3}});
  std::ostringstream out;
  EXPECT_THROW(save_model(out, b.model, wrong), std::invalid_argument);
}

TEST(Cli, UsageAndErrors) {
  const auto none = run_cli({});
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.err.find("build-vocab"), std::string::npos);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"build-vocab", "--out", "x"}).code, 2);  // missing --corpus

  const auto missing = run_cli({"build-vocab", "--corpus", "/nonexistent/corpus.jsonl", "--out", "/tmp/x"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("/nonexistent/corpus.jsonl"), std::string::npos);
}

TEST(Cli, GradcheckCommand) {
  const auto r = run_cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("group=ntee.W"), std::string::npos);
  EXPECT_NE(r.out.find("group=qa."), std::string::npos);
  EXPECT_EQ(run_cli({"gradcheck", "--tolerance", "1e-30"}).code, 1);
}

TEST(Cli, PretrainTrainStsAndNeighbors) {
  ScratchDir dir("cli_sts");
  const auto corpus = testing::two_topic_corpus(1, 60, 0);
  testing::write_corpus(dir / "corpus.jsonl", corpus.train);
  auto r = run_cli({"build-vocab", "--corpus", dir / "corpus.jsonl", "--out", dir / "vocab.tsv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("entities=2"), std::string::npos);

  r = run_cli({"--seed", "4", "pretrain", "--corpus", dir / "corpus.jsonl", "--vocab", dir / "vocab.tsv", "--out",
               dir / "emb.bin", "--text-out", dir / "emb.txt", "--dim", "8", "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read_file(dir / "emb.txt").find("ENTITY/Topic_A "), std::string::npos);

  r = run_cli({"--seed", "4", "train", "--corpus", dir / "corpus.jsonl", "--vocab", dir / "vocab.tsv", "--embeddings",
               dir / "emb.bin", "--out", dir / "model.bin", "--negatives", "1", "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("pairs=60"), std::string::npos);
  EXPECT_NE(r.err.find("[ntee] config train.negatives=1"), std::string::npos);
  EXPECT_EQ(r.err.find("config pretrain."), std::string::npos);

  testing::write_file(dir / "sts.tsv", "t0w1 t0w2\tt0w3\t4.5\nt0w1\tt1w2\t1.0\nt1w1 t1w3\tt1w4\t4.0\n");
  r = run_cli({"eval-sts", "--model", dir / "model.bin", "--pairs", dir / "sts.tsv", "--dump", dir / "scores.txt"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=3"), std::string::npos);

  r = run_cli({"neighbors", "--model", dir / "model.bin", "--query", "Topic_A", "--kind", "entity", "--top", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("1\tTopic_B\t", 0), 0u);

  r = run_cli({"neighbors", "--model", dir / "model.bin", "--query", "nosuchword"});
  EXPECT_EQ(r.code, 1);

  // Dimension mismatch between --dim and pre-trained vectors is reported.
  r = run_cli({"train", "--corpus", dir / "corpus.jsonl", "--vocab", dir / "vocab.tsv", "--embeddings",
               dir / "emb.bin", "--out", dir / "m2.bin", "--dim", "16", "--negatives", "1"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ConfigFileSuppliesDefaults) {
  ScratchDir dir("cli_config");
  testing::write_corpus(dir / "corpus.jsonl", testing::two_topic_corpus(2, 20, 0).train);
  testing::write_file(dir / "run.ini", "seed=11\n[build-vocab]\nmin-word-count=1000\n");
  const auto r =
      run_cli({"--config", dir / "run.ini", "build-vocab", "--corpus", dir / "corpus.jsonl", "--out", dir / "v.tsv"});
  EXPECT_EQ(r.code, 1);  // every word is below the threshold
  EXPECT_NE(r.err.find("config seed=11"), std::string::npos);
}

TEST(Cli, EntityLinkingPipeline) {
  ScratchDir dir("cli_el");
  const auto w = testing::el_world(5, 40);
  testing::write_corpus(dir / "corpus.jsonl", w.docs);
  testing::write_mentions(dir / "mentions.jsonl", w.mentions);
  auto r = run_cli({"build-vocab", "--corpus", dir / "corpus.jsonl", "--out", dir / "vocab.tsv", "--min-word-count",
                    "1", "--min-entity-count", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"train", "--corpus", dir / "corpus.jsonl", "--vocab", dir / "vocab.tsv", "--out", dir / "model.bin",
               "--dim", "8", "--negatives", "3", "--epochs", "5", "--batch-size", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"build-dict", "--corpus", dir / "corpus.jsonl", "--out", dir / "dict.tsv"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"train-el", "--model", dir / "model.bin", "--corpus", dir / "corpus.jsonl", "--mentions",
               dir / "mentions.jsonl", "--dict", dir / "dict.tsv", "--out", dir / "el.bin", "--epochs", "100",
               "--batch-size", "10", "--hidden", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"eval-el", "--model", dir / "el.bin", "--corpus", dir / "corpus.jsonl", "--mentions",
               dir / "mentions.jsonl", "--dict", dir / "dict.tsv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("micro=1.000000"), std::string::npos) << r.out;

  // Representations are left untouched by train-el.
  const auto before = load_model(dir / "model.bin");
  const auto after = load_model(dir / "el.bin");
  EXPECT_EQ(before.model, after.model);
  ASSERT_TRUE(after.mlp.has_value());
  EXPECT_EQ(after.mlp->feature_dim(), 2 * 8 + 8u);

  r = run_cli({"train-el", "--model", dir / "model.bin", "--corpus", dir / "corpus.jsonl", "--mentions",
               dir / "mentions.jsonl", "--dict", dir / "dict.tsv", "--out", dir / "el_off.bin", "--epochs", "2",
               "--strsim", "off"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_model(dir / "el_off.bin").mlp->feature_dim(), 2 * 8 + 4u);
  r = run_cli({"eval-el", "--model", dir / "el_off.bin", "--corpus", dir / "corpus.jsonl", "--mentions",
               dir / "mentions.jsonl", "--dict", dir / "dict.tsv"});
  EXPECT_EQ(r.code, 0) << r.err;

  r = run_cli({"eval-el", "--model", dir / "model.bin", "--corpus", dir / "corpus.jsonl", "--mentions",
               dir / "mentions.jsonl", "--dict", dir / "dict.tsv"});
  EXPECT_EQ(r.code, 1);  // no classifier section
}

TEST(Cli, QaPipeline) {
  ScratchDir dir("cli_qa");
  const auto qs = testing::qa_questions(6);
  testing::write_questions(dir / "questions.jsonl", qs);
  testing::write_corpus(dir / "corpus.jsonl", testing::qa_corpus(qs));
  auto r = run_cli({"build-vocab", "--corpus", dir / "corpus.jsonl", "--out", dir / "vocab.tsv", "--min-word-count",
                    "1", "--min-entity-count", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"train", "--corpus", dir / "corpus.jsonl", "--vocab", dir / "vocab.tsv", "--out", dir / "model.bin",
               "--dim", "8", "--negatives", "2", "--epochs", "3", "--batch-size", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"--seed", "3", "build-qa", "--questions", dir / "questions.jsonl", "--min-count", "5", "--out",
               dir / "qa.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "answers=5 train=30 dev=10 test=10\n");
  r = run_cli({"train-qa", "--model", dir / "model.bin", "--dataset", dir / "qa.jsonl", "--out", dir / "qa.bin",
               "--epochs", "60", "--batch-size", "10", "--hidden", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"eval-qa", "--model", dir / "qa.bin", "--dataset", dir / "qa.jsonl", "--split", "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=30"), std::string::npos);
  EXPECT_NE(load_model(dir / "model.bin").model, load_model(dir / "qa.bin").model);

  // --questions builds the same split in-process from the same seed.
  r = run_cli({"--seed", "3", "eval-qa", "--model", dir / "qa.bin", "--questions", dir / "questions.jsonl",
               "--min-count", "5", "--split", "dev"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run_cli({"eval-qa", "--model", dir / "qa.bin"}).code, 1);
}

}  // namespace
}  // namespace ntee
