// Finite-difference verification of every closed-form gradient on small
// random instances. Backs the `gradcheck` command and the test suites.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ntee/mlp.hpp"
#include "ntee/model.hpp"
#include "ntee/numerics.hpp"
#include "ntee/qa.hpp"
#include "ntee/skipgram.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

struct GradcheckEntry {
  std::string group;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

namespace detail {

/// Max relative error between `analytic` and central differences of `f` with
/// respect to the parameters exposed by `access` on a copy of `model`.
template <class Model>
double check_block(const Model& model, const std::function<std::span<double>(Model&)>& access,
                   const std::function<double(const Model&)>& f, std::span<const double> analytic, double h) {
  Model work = model;
  const std::span<double> target = access(work);
  const Vec at(target.begin(), target.end());
  const Vec numeric = finite_diff_grad(
      [&](std::span<const double> x) {
        std::ranges::copy(x, target.begin());
        return f(work);
      },
      at, h);
  std::ranges::copy(at, target.begin());
  return max_relative_error(analytic, numeric);
}

inline void randomize(std::span<double> xs, Rng& rng, double scale) {
  for (double& x : xs) x = rng.uniform(-scale, scale);
}

inline void record(std::vector<GradcheckEntry>& out, const std::string& group, double err, std::size_t n) {
  for (auto& e : out)
    if (e.group == group) {
      e.max_relative_error = std::max(e.max_relative_error, err);
      e.coordinates += n;
      return;
    }
  out.push_back({group, err, n});
}

}  // namespace detail

/// Skip-gram pair loss over every row it touches.
inline std::vector<GradcheckEntry> gradcheck_skipgram(std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed, 101);
  const std::size_t V = 12, d = 6;
  EmbeddingTable t{Mat(V, d), Mat(V, d)};
  detail::randomize(t.input.values(), rng, 0.8);
  detail::randomize(t.output.values(), rng, 0.8);
  const std::int32_t center = 0, context = 3;
  const std::vector<std::int32_t> negs{5, 7, 9};
  const auto g = skipgram_pair_gradient(t, center, context, negs);
  auto f = [&](const EmbeddingTable& x) { return skipgram_pair_loss(x, center, context, negs); };
  std::vector<GradcheckEntry> out;
  detail::record(out, "skipgram.center",
                 detail::check_block<EmbeddingTable>(t, [&](EmbeddingTable& x) { return x.input.row(center); }, f,
                                                     g.center, h),
                 d);
  detail::record(out, "skipgram.context",
                 detail::check_block<EmbeddingTable>(t, [&](EmbeddingTable& x) { return x.output.row(context); }, f,
                                                     g.context, h),
                 d);
  for (std::size_t i = 0; i < negs.size(); ++i)
    detail::record(out, "skipgram.negative",
                   detail::check_block<EmbeddingTable>(t, [&](EmbeddingTable& x) { return x.output.row(negs[i]); }, f,
                                                       g.negatives[i], h),
                   d);
  return out;
}

/// Sampled softmax loss over a few texts with fixed negatives.
inline std::vector<GradcheckEntry> gradcheck_ntee(std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed, 102);
  const std::size_t nw = 5, ne = 6, d = 4;
  NteeModel m = make_random_model(nw, ne, d, rng);
  detail::randomize(m.b, rng, 0.5);
  // Entity 4 only ever appears as a negative.
  const std::vector<std::int32_t> t0{0, 1, 1, 3}, t1{2, 4}, t2{0, 4, 3};
  const std::vector<SampledText> batch{{t0, {{0, {4, 1}}, {2, {5, 4}}}},
                                       {t1, {{1, {0, 4}}}},
                                       {t2, {{3, {4, 2}}, {5, {1, 0}}}}};
  NteeGradient g(d);
  accumulate_gradient(m, batch, g);
  auto f = [&](const NteeModel& x) { return sampled_loss(x, batch); };

  std::vector<GradcheckEntry> out;
  detail::record(out, "ntee.W",
                 detail::check_block<NteeModel>(m, [](NteeModel& x) { return x.W.values(); }, f, g.W.values(), h),
                 d * d);
  detail::record(out, "ntee.b", detail::check_block<NteeModel>(m, [](NteeModel& x) { return std::span(x.b); }, f, g.b, h),
                 d);
  for (const auto& [w, grad] : g.words)
    detail::record(out, "ntee.word_emb",
                   detail::check_block<NteeModel>(m, [w](NteeModel& x) { return x.word_emb.row(w); }, f, grad, h), d);
  std::set<std::int32_t> positives;
  for (const auto& st : batch)
    for (const auto& t : st.targets) positives.insert(t.first);
  for (const auto& [e, grad] : g.entities) {
    const std::string group = positives.count(e) ? "ntee.entity_emb.positive" : "ntee.entity_emb.negative";
    detail::record(out, group,
                   detail::check_block<NteeModel>(m, [e](NteeModel& x) { return x.entity_emb.row(e); }, f, grad, h), d);
  }
  return out;
}

/// Candidate cross-entropy through the MLP, dropout off.
inline std::vector<GradcheckEntry> gradcheck_mlp(std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed, 103);
  MlpModel m = make_mlp(5, 7, rng);
  detail::randomize(m.b1, rng, 0.3);
  m.b2 = 0.1;
  std::vector<Vec> cands(4, Vec(5));
  for (auto& c : cands) detail::randomize(c, rng, 1.0);
  const std::size_t gold = 2;
  MlpGradient g(m);
  accumulate_mlp_gradient(m, cands, gold, 0.0, nullptr, g);
  auto f = [&](const MlpModel& x) {
    MlpGradient scratch(x);
    return accumulate_mlp_gradient(x, cands, gold, 0.0, nullptr, scratch);
  };
  std::vector<GradcheckEntry> out;
  detail::record(out, "mlp.W1", detail::check_block<MlpModel>(m, [](MlpModel& x) { return x.W1.values(); }, f, g.W1.values(), h),
                 m.W1.size());
  detail::record(out, "mlp.b1", detail::check_block<MlpModel>(m, [](MlpModel& x) { return std::span(x.b1); }, f, g.b1, h),
                 m.b1.size());
  detail::record(out, "mlp.w2", detail::check_block<MlpModel>(m, [](MlpModel& x) { return std::span(x.w2); }, f, g.w2, h),
                 m.w2.size());
  const Vec gb2{g.b2};
  detail::record(out, "mlp.b2",
                 detail::check_block<MlpModel>(m, [](MlpModel& x) { return std::span(&x.b2, 1); }, f, gb2, h), 1);
  return out;
}

/// QA loss, differentiated end to end from the MLP down into the model tables.
inline std::vector<GradcheckEntry> gradcheck_qa(std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed, 104);
  const std::size_t d = 4;
  const Vocabulary vocab({{"alpha", 9}, {"beta", 8}, {"gamma", 7}, {"delta", 6}, {"eps", 5}, {"zeta", 5}},
                         {{"A", 9}, {"B", 8}, {"C", 7}, {"D", 3}});
  struct State {
    NteeModel ntee;
    MlpModel mlp;
  };
  State s{make_random_model(vocab.num_words(), vocab.num_entities(), d, rng), {}};
  detail::randomize(s.ntee.b, rng, 0.5);
  s.mlp = make_mlp(2 * d + 1, 6, rng);
  detail::randomize(s.mlp.b1, rng, 0.3);
  const AnswerSet answers({"A", "B", "C"}, vocab);
  const std::vector<std::int32_t> tokens{0, 2, 2, 5};
  const std::size_t gold = 1;

  MlpGradient mg(s.mlp);
  NteeGradient ng(d);
  qa_accumulate_gradient(s.ntee, s.mlp, answers, tokens, gold, 0.0, nullptr, mg, &ng);
  auto f = [&](const State& x) {
    MlpGradient scratch(x.mlp);
    return qa_accumulate_gradient(x.ntee, x.mlp, answers, tokens, gold, 0.0, nullptr, scratch, nullptr);
  };
  std::vector<GradcheckEntry> out;
  using Access = std::function<std::span<double>(State&)>;
  auto check = [&](const std::string& group, Access a, std::span<const double> analytic) {
    detail::record(out, group, detail::check_block<State>(s, a, f, analytic, h), analytic.size());
  };
  check("qa.mlp.W1", [](State& x) { return x.mlp.W1.values(); }, mg.W1.values());
  check("qa.mlp.b1", [](State& x) { return std::span(x.mlp.b1); }, mg.b1);
  check("qa.mlp.w2", [](State& x) { return std::span(x.mlp.w2); }, mg.w2);
  check("qa.ntee.W", [](State& x) { return x.ntee.W.values(); }, ng.W.values());
  check("qa.ntee.b", [](State& x) { return std::span(x.ntee.b); }, ng.b);
  for (const auto& [w, grad] : ng.words) check("qa.ntee.word_emb", [w](State& x) { return x.ntee.word_emb.row(w); }, grad);
  for (const auto& [e, grad] : ng.entities)
    check("qa.ntee.entity_emb", [e](State& x) { return x.ntee.entity_emb.row(e); }, grad);
  return out;
}

inline std::vector<GradcheckEntry> gradcheck_all(std::uint64_t seed, double h = 1e-5) {
  std::vector<GradcheckEntry> all;
  for (auto part : {gradcheck_skipgram(seed, h), gradcheck_ntee(seed, h), gradcheck_mlp(seed, h), gradcheck_qa(seed, h)})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

}  // namespace ntee
