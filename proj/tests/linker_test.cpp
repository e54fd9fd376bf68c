#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ntee/linker.hpp"
#include "synthetic.hpp"

namespace ntee {
namespace {

AnchorStats washington_stats() {
  AnchorStats s;
  s.add("washington", "George_Washington", 6);
  s.add("washington", "Washington,_D.C.", 3);
  s.add("washington", "Washington_(state)", 1);
  s.add("george washington", "George_Washington", 2);
  return s;
}

TEST(Statistics, PopularityAndPrior) {
  const auto s = washington_stats();
  EXPECT_EQ(entity_popularity(s, "Nobody"), 0.0);
  EXPECT_NEAR(entity_popularity(s, "George_Washington"), std::log(9.0), 1e-15);
  EXPECT_NEAR(prior_probability(s, "Washington", "George_Washington"), 0.6, 1e-15);
  EXPECT_EQ(prior_probability(s, "unseen", "George_Washington"), 0.0);
  double total = 0.0;
  for (const auto& e : s.entities_for("washington")) total += prior_probability(s, "washington", e);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Dictionary, SurfacesFromTitlesRedirectsAnchorsAndTokens) {
  const auto s = washington_stats();
  const std::vector<std::string> kb{"George_Washington", "Washington,_D.C.", "Washington_(state)", "Epic_(genre)"};
  const std::map<std::string, std::string> redirects{{"Father_of_His_Country", "George_Washington"}};
  const auto d = build_mention_dictionary(kb, redirects, s);
  const auto* w = d.find("Washington");
  ASSERT_NE(w, nullptr);
  ASSERT_EQ(w->size(), 3u);
  EXPECT_EQ((*w)[0].entity, "George_Washington");
  EXPECT_EQ((*w)[1].entity, "Washington,_D.C.");
  ASSERT_NE(d.find("father of his country"), nullptr);
  ASSERT_NE(d.find("epic"), nullptr);
  EXPECT_EQ(d.find("genre"), nullptr);  // parenthetical qualifiers are not surfaces
  ASSERT_NE(d.find("epic (genre)"), nullptr);
  EXPECT_EQ(d.find("of"), nullptr) << "only title tokens, not redirect tokens";
  EXPECT_EQ(d.find("zzz"), nullptr);
}

TEST(Dictionary, TruncatesTo100ByPopularity) {
  AnchorStats s;
  std::vector<std::string> kb;
  for (int i = 0; i < 150; ++i) {
    const std::string e = "E" + std::to_string(1000 + i);
    kb.push_back(e);
    s.add("amb", e, static_cast<std::uint64_t>(i + 1));
  }
  const auto d = build_mention_dictionary(kb, {}, s);
  const auto* c = d.find("amb");
  ASSERT_NE(c, nullptr);
  ASSERT_EQ(c->size(), 100u);
  EXPECT_EQ(c->front().entity, "E1149");
  EXPECT_EQ(c->back().entity, "E1050");
  for (std::size_t i = 1; i < c->size(); ++i) EXPECT_GE((*c)[i - 1].popularity, (*c)[i].popularity);
}

TEST(Dictionary, TiesBrokenByTitleAndRoundTrip) {
  AnchorStats s;
  s.add("x", "B", 1);
  s.add("x", "A", 1);
  const std::vector<std::string> kb;
  const auto d = build_mention_dictionary(kb, {}, s);
  EXPECT_EQ(d.find("x")->front().entity, "A");
  std::stringstream ss;
  save_dictionary(ss, d);
  const auto back = load_dictionary(ss);
  EXPECT_EQ(back.entries, d.entries);
}

TEST(Features, StringSimilarity) {
  EXPECT_EQ(string_similarity("New_York_City", "new york city"), (std::array<bool, 4>{true, true, true, true}));
  EXPECT_EQ(string_similarity("New_York_City", "York"), (std::array<bool, 4>{false, true, false, false}));
  EXPECT_EQ(string_similarity("New_York_City", "New"), (std::array<bool, 4>{false, true, true, false}));
  EXPECT_EQ(string_similarity("New_York_City", "city"), (std::array<bool, 4>{false, true, false, true}));
  EXPECT_EQ(string_similarity("Paris", "London"), (std::array<bool, 4>{false, false, false, false}));
}

TEST(Features, MaxPriorOverDocumentSurfaces) {
  const auto s = washington_stats();
  const std::vector<std::string> doc{"Washington", "George Washington"};
  const auto f = el_features(s, "Washington", "George_Washington", doc);
  EXPECT_NEAR(f.prior, 0.6, 1e-15);
  EXPECT_NEAR(f.max_prior, 1.0, 1e-15);
}

TEST(Features, LayoutAndDimension) {
  const Vocabulary v({{"capital", 5}, {"city", 5}}, {{"Washington,_D.C.", 3}, {"George_Washington", 3}});
  const std::size_t d = 3;
  NteeModel m{Mat(2, d, 0.5), Mat(2, d, 0.0), Mat(d, d, 0.0), Vec(d, 0.0)};
  m.entity_emb(0, 0) = 3.0;
  m.entity_emb(0, 1) = 4.0;
  for (std::size_t i = 0; i < d; ++i) m.W(i, i) = 1.0;
  const auto s = washington_stats();
  const std::vector<std::string> kb;
  const auto dict = build_mention_dictionary(kb, {}, s);
  LinkerContext ctx{m, v, dict, s, true};
  EXPECT_EQ(ctx.feature_dim(), 2 * d + 8);
  const Vec vt = encode_text(m, v.word_ids("capital city"));
  const std::vector<std::string> surfaces{"Washington"};
  const Vec f = build_feature_vector(ctx, vt, "Washington", "Washington,_D.C.", surfaces);
  ASSERT_EQ(f.size(), 2 * d + 8);
  EXPECT_NEAR(f[0], 0.6, 1e-15);
  EXPECT_NEAR(f[1], 0.8, 1e-15);
  EXPECT_NEAR(f[2 * d], 0.6 * vt[0] + 0.8 * vt[1], 1e-15);
  EXPECT_NEAR(f[2 * d + 1], std::log(4.0), 1e-15);
  EXPECT_NEAR(f[2 * d + 2], 0.3, 1e-15);
  EXPECT_EQ(f[2 * d + 4], 0.0);  // equals
  EXPECT_EQ(f[2 * d + 5], 1.0);  // contains
  EXPECT_EQ(f[2 * d + 6], 1.0);  // starts with
  EXPECT_EQ(f[2 * d + 7], 0.0);  // ends with
  ctx.strsim = false;
  EXPECT_EQ(build_feature_vector(ctx, vt, "Washington", "George_Washington", surfaces).size(), 2 * d + 4);
  // Unknown entities contribute a zero vector.
  const Vec g = build_feature_vector(ctx, vt, "Washington", "Washington_(state)", surfaces);
  for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(Mentions, LoadAndValidateOffsets) {
  std::istringstream in(R"({"doc_id":"d0","surface":"term1","start":2,"end":7,"gold_entity":"X"})" "\n\n");
  const auto ms = load_mentions(in);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].end, 7u);
  std::istringstream bad(R"({"doc_id":"d0","surface":"t","start":4,"end":4,"gold_entity":"X"})");
  EXPECT_THROW(load_mentions(bad), std::runtime_error);

  const auto w = testing::el_world(1, 4);
  const auto stats = collect_anchor_stats(w.docs);
  const auto dict = build_mention_dictionary(w.entities, {}, stats);
  const Vocabulary v({{"zzz", 5}}, {{w.entities[0], 3}});
  Rng rng(1);
  const auto m = make_random_model(1, 1, 2, rng);
  const LinkerContext ctx{m, v, dict, stats};
  const auto idx = index_documents(w.docs);
  auto shifted = w.mentions;
  shifted[0].start += 1;
  EXPECT_THROW(make_linker_examples(ctx, idx, shifted, true), std::runtime_error);
  auto unknown = w.mentions;
  unknown[0].doc_id = "missing";
  EXPECT_THROW(make_linker_examples(ctx, idx, unknown, true), std::runtime_error);
}

TEST(Linker, RecallAndOverfitOnSyntheticWorld) {
  const auto w = testing::el_world(3);
  const auto stats = collect_anchor_stats(w.docs);
  const auto dict = build_mention_dictionary(w.entities, {}, stats);
  for (const auto& m : w.mentions) {
    const auto c = generate_candidates(dict, m);
    EXPECT_NE(std::find(c.begin(), c.end(), m.gold_entity), c.end());
  }
  const auto vocab = build_vocab(w.docs, {1, 1});
  Rng rng(2);
  const auto model = make_random_model(vocab.num_words(), vocab.num_entities(), 8, rng);
  const LinkerContext ctx{model, vocab, dict, stats};
  const auto idx = index_documents(w.docs);
  MlpConfig cfg;
  cfg.hidden_units = 32;
  cfg.epochs = 200;
  cfg.batch_size = 10;
  const auto res = train_linker(ctx, idx, w.mentions, cfg, rng);
  EXPECT_EQ(res.skipped, 0u);
  const auto acc = evaluate_linker(res.mlp, ctx, idx, w.mentions);
  EXPECT_EQ(acc.micro, 1.0);
  EXPECT_EQ(acc.macro, 1.0);
}

TEST(Linker, MentionsWithoutCandidatesCountAsErrors) {
  const AnnotatedDocument doc{"d", std::nullopt, "alpha beta", {}};
  const std::vector<AnnotatedDocument> docs{doc};
  AnchorStats stats;
  stats.add("alpha", "A", 1);
  const std::vector<std::string> kb;
  const auto dict = build_mention_dictionary(kb, {}, stats);
  const Vocabulary v({{"alpha", 5}}, {{"A", 3}});
  Rng rng(1);
  const auto model = make_random_model(1, 1, 2, rng);
  const LinkerContext ctx{model, v, dict, stats};
  const std::vector<Mention> ms{{"d", "alpha", 0, 5, "A"}, {"d", "beta", 6, 10, "B"}};
  const auto mlp = make_mlp(ctx.feature_dim(), 4, rng);
  const auto acc = evaluate_linker(mlp, ctx, index_documents(docs), ms);
  EXPECT_EQ(acc.micro, 0.5);
}

}  // namespace
}  // namespace ntee
