// The joint text-entity model. A bag-of-words encoder with an affine map is
// trained to score the text's entities against sampled negatives.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ntee/numerics.hpp"
#include "ntee/skipgram.hpp"
#include "ntee/training_pairs.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

struct NteeModel {
  Mat word_emb;    // |V_word| x d
  Mat entity_emb;  // |V_entity| x d
  Mat W;           // d x d
  Vec b;           // d

  std::size_t dim() const { return b.size(); }
  std::size_t num_words() const { return word_emb.rows(); }
  std::size_t num_entities() const { return entity_emb.rows(); }

  bool operator==(const NteeModel&) const = default;
};

/// |V| d + d^2 + d
inline std::uint64_t param_count(std::uint64_t num_words, std::uint64_t num_entities, std::uint64_t d) {
  if (num_entities == 0) throw std::invalid_argument("param_count: entity vocabulary must not be empty");
  return (num_words + num_entities) * d + d * d + d;
}

inline std::uint64_t param_count(const NteeModel& m) {
  return param_count(m.num_words(), m.num_entities(), m.dim());
}

inline void check_model(const NteeModel& m) {
  const std::size_t d = m.dim();
  if (d == 0) throw std::invalid_argument("model: dimension must be positive");
  if (m.word_emb.cols() != d || m.entity_emb.cols() != d || m.W.rows() != d || m.W.cols() != d)
    throw std::invalid_argument("model: inconsistent parameter dimensions");
  if (m.num_entities() == 0) throw std::invalid_argument("model: entity vocabulary must not be empty");
}

/// Random tables for training without pre-trained vectors.
inline NteeModel make_random_model(std::size_t num_words, std::size_t num_entities, std::size_t d, Rng& rng) {
  NteeModel m{Mat(num_words, d), Mat(num_entities, d), glorot_init(d, d, rng), Vec(d, 0.0)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& x : m.word_emb.values()) x = rng.uniform(-bound, bound);
  for (double& x : m.entity_emb.values()) x = rng.uniform(-bound, bound);
  check_model(m);
  return m;
}

/// Tables copied from skip-gram input vectors; W Glorot, b zero.
inline NteeModel make_pretrained_model(const EmbeddingTable& table, const Vocabulary& vocab, Rng& rng) {
  if (table.input.rows() != vocab.size())
    throw std::invalid_argument("make_pretrained_model: embedding rows do not match vocabulary size");
  const std::size_t d = table.input.cols();
  NteeModel m{Mat(vocab.num_words(), d), Mat(vocab.num_entities(), d), glorot_init(d, d, rng), Vec(d, 0.0)};
  for (std::size_t w = 0; w < vocab.num_words(); ++w) std::ranges::copy(table.input.row(w), m.word_emb.row(w).begin());
  for (std::size_t e = 0; e < vocab.num_entities(); ++e)
    std::ranges::copy(table.input.row(vocab.num_words() + e), m.entity_emb.row(e).begin());
  check_model(m);
  return m;
}

/// Intermediate values of the encoder, kept for backpropagation.
struct EncodedText {
  Vec sum;          // v_s
  double norm = 0;  // |v_s|
  Vec unit;         // v_s / |v_s|, zero when v_s = 0
  Vec vt;           // W unit + b
};

inline EncodedText encode_text_detailed(const NteeModel& m, std::span<const std::int32_t> tokens) {
  const std::size_t d = m.dim();
  EncodedText enc{Vec(d, 0.0), 0.0, Vec(d, 0.0), {}};
  for (auto w : tokens) {
    if (w < 0 || static_cast<std::size_t>(w) >= m.num_words()) throw std::out_of_range("encode_text: unknown word id");
    axpy(1.0, m.word_emb.row(w), enc.sum);
  }
  enc.norm = norm2(enc.sum);
  if (enc.norm == 0.0) {
    enc.vt = m.b;
    return enc;
  }
  for (std::size_t i = 0; i < d; ++i) enc.unit[i] = enc.sum[i] / enc.norm;
  enc.vt = matvec(m.W, enc.unit);
  axpy(1.0, m.b, enc.vt);
  return enc;
}

/// v_t = W v_s/|v_s| + b, or b when v_s = 0.
inline Vec encode_text(const NteeModel& m, std::span<const std::int32_t> tokens) {
  return encode_text_detailed(m, tokens).vt;
}

inline double score(const NteeModel& m, std::int32_t entity, std::span<const double> vt) {
  if (entity < 0 || static_cast<std::size_t>(entity) >= m.num_entities())
    throw std::out_of_range("score: unknown entity id " + std::to_string(entity));
  return dot(m.entity_emb.row(entity), vt);
}

/// k distinct ids drawn uniformly from [0, num_entities) minus `excluded`
/// (sorted). Rejection sampling when eligible ids are plentiful, a partial
/// shuffle of the eligible set otherwise.
inline std::vector<std::int32_t> sample_negatives(Rng& rng, std::span<const std::int32_t> excluded, std::size_t k,
                                                  std::size_t num_entities) {
  auto is_excluded = [&](std::int32_t e) { return std::binary_search(excluded.begin(), excluded.end(), e); };
  std::size_t n_excluded = 0;
  for (auto e : excluded)
    if (e >= 0 && static_cast<std::size_t>(e) < num_entities) ++n_excluded;
  const std::size_t eligible = num_entities - n_excluded;
  if (eligible < k)
    throw std::invalid_argument("sample_negatives: only " + std::to_string(eligible) + " eligible entities for k=" +
                                std::to_string(k));
  std::vector<std::int32_t> out;
  out.reserve(k);
  if (2 * k <= eligible) {
    while (out.size() < k) {
      const auto e = static_cast<std::int32_t>(rng.below(num_entities));
      if (is_excluded(e) || std::find(out.begin(), out.end(), e) != out.end()) continue;
      out.push_back(e);
    }
    return out;
  }
  std::vector<std::int32_t> pool;
  pool.reserve(eligible);
  for (std::size_t e = 0; e < num_entities; ++e)
    if (!is_excluded(static_cast<std::int32_t>(e))) pool.push_back(static_cast<std::int32_t>(e));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

inline std::vector<std::int32_t> sample_negatives(Rng& rng, std::int32_t positive,
                                                  std::span<const std::int32_t> text_entities, std::size_t k,
                                                  std::size_t num_entities) {
  if (!std::binary_search(text_entities.begin(), text_entities.end(), positive)) {
    std::vector<std::int32_t> ex(text_entities.begin(), text_entities.end());
    ex.insert(std::upper_bound(ex.begin(), ex.end(), positive), positive);
    return sample_negatives(rng, ex, k, num_entities);
  }
  return sample_negatives(rng, text_entities, k, num_entities);
}

/// exp(s_pos) / sum over {pos} u negatives of exp(s_e).
inline double prob_sampled(const NteeModel& m, std::int32_t positive, std::span<const std::int32_t> negatives,
                           std::span<const double> vt) {
  Vec scores;
  scores.reserve(negatives.size() + 1);
  scores.push_back(score(m, positive, vt));
  for (auto n : negatives) scores.push_back(score(m, n, vt));
  return std::exp(scores[0] - log_sum_exp(scores));
}

/// A text with, for each positive entity, its own negative set.
struct SampledText {
  std::span<const std::int32_t> tokens;
  std::vector<std::pair<std::int32_t, std::vector<std::int32_t>>> targets;
};

/// Negatives are drawn per positive; k is capped at the number of entities
/// not in the text.
inline std::vector<SampledText> sample_targets(std::span<const TrainingPair> pairs, std::size_t k,
                                               std::size_t num_entities, Rng& rng) {
  std::vector<SampledText> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.entities.empty()) throw std::invalid_argument("training pair without entities");
    SampledText st{p.tokens, {}};
    const std::size_t eligible = num_entities - p.entities.size();
    const std::size_t kk = std::min(k, eligible);
    for (auto e : p.entities) st.targets.emplace_back(e, sample_negatives(rng, p.entities, kk, num_entities));
    out.push_back(std::move(st));
  }
  return out;
}

/// Sum of -log P(e|t) over every (text, positive) with fixed negatives.
inline double sampled_loss(const NteeModel& m, std::span<const SampledText> batch) {
  double total = 0.0;
  for (const auto& st : batch) {
    const Vec vt = encode_text(m, st.tokens);
    for (const auto& [pos, negs] : st.targets) total -= std::log(prob_sampled(m, pos, negs, vt));
  }
  return total;
}

inline double loss(const NteeModel& m, std::span<const TrainingPair> batch, std::size_t k, Rng& rng) {
  return sampled_loss(m, sample_targets(batch, k, m.num_entities(), rng));
}

/// Dense gradients for W and b; sparse, ordered rows for the tables.
struct NteeGradient {
  Mat W;
  Vec b;
  std::map<std::int32_t, Vec> words;
  std::map<std::int32_t, Vec> entities;

  explicit NteeGradient(std::size_t d = 0) : W(d, d, 0.0), b(d, 0.0) {}

  Vec& word_row(std::int32_t id) { return words.try_emplace(id, Vec(b.size(), 0.0)).first->second; }
  Vec& entity_row(std::int32_t id) { return entities.try_emplace(id, Vec(b.size(), 0.0)).first->second; }
};

/// Backpropagates d loss / d v_t into the affine map and the word rows of `tokens`.
inline void backprop_encoder(const NteeModel& m, const EncodedText& enc, std::span<const std::int32_t> tokens,
                             std::span<const double> grad_vt, NteeGradient& g) {
  const std::size_t d = m.dim();
  axpy(1.0, grad_vt, g.b);
  if (enc.norm == 0.0) return;
  add_outer(1.0, grad_vt, enc.unit, g.W);
  // d unit / d v_s = (I - u u^T) / |v_s|
  const Vec grad_unit = matvec_transposed(m.W, grad_vt);
  const double proj = dot(grad_unit, enc.unit);
  Vec grad_sum(d);
  for (std::size_t i = 0; i < d; ++i) grad_sum[i] = (grad_unit[i] - proj * enc.unit[i]) / enc.norm;
  for (auto w : tokens) axpy(1.0, grad_sum, g.word_row(w));
}

/// Adds the gradient of sampled_loss over `batch` into g; returns the loss.
inline double accumulate_gradient(const NteeModel& m, std::span<const SampledText> batch, NteeGradient& g) {
  const std::size_t d = m.dim();
  double total = 0.0;
  for (const auto& st : batch) {
    const EncodedText enc = encode_text_detailed(m, st.tokens);
    Vec grad_vt(d, 0.0);
    for (const auto& [pos, negs] : st.targets) {
      Vec scores{score(m, pos, enc.vt)};
      for (auto n : negs) scores.push_back(score(m, n, enc.vt));
      const Vec p = softmax(scores);
      total -= scores[0] - log_sum_exp(scores);
      // dL/ds_j = p_j - [j = pos]
      for (std::size_t j = 0; j < scores.size(); ++j) {
        const std::int32_t e = j == 0 ? pos : negs[j - 1];
        const double coef = p[j] - (j == 0 ? 1.0 : 0.0);
        axpy(coef, m.entity_emb.row(e), grad_vt);
        axpy(coef, enc.vt, g.entity_row(e));
      }
    }
    backprop_encoder(m, enc, st.tokens, grad_vt, g);
  }
  return total;
}

struct NteeTrainConfig {
  std::size_t dim = 300;
  std::size_t negatives = 30;
  std::size_t batch_size = 100;
  std::size_t epochs = 1;
  Granularity granularity = Granularity::sentence;
  bool fixed_embeddings = false;
  std::uint64_t seed = 0;
  RmspropConfig optimizer{};
};

/// Optimizer state for every model parameter; table rows are updated lazily
/// (only rows with a gradient in the batch).
class NteeOptimizer {
 public:
  NteeOptimizer(const NteeModel& m, const RmspropConfig& cfg)
      : cfg_(cfg),
        W_(m.W.size(), cfg),
        b_(m.b.size(), cfg),
        words_(m.word_emb.size(), cfg),
        entities_(m.entity_emb.size(), cfg) {}

  void apply(NteeModel& m, const NteeGradient& g, bool update_embeddings) {
    rmsprop_update(m.W, g.W, W_, "W");
    rmsprop_update(m.b, g.b, b_, "b");
    if (!update_embeddings) return;
    const std::size_t d = m.dim();
    for (const auto& [id, grad] : g.words)
      rmsprop_update_slice(m.word_emb.row(id), grad, std::span(words_.accum).subspan(id * d, d), cfg_,
                           "word_emb[" + std::to_string(id) + "]");
    for (const auto& [id, grad] : g.entities)
      rmsprop_update_slice(m.entity_emb.row(id), grad, std::span(entities_.accum).subspan(id * d, d), cfg_,
                           "entity_emb[" + std::to_string(id) + "]");
  }

 private:
  RmspropConfig cfg_;
  RmspropState W_, b_, words_, entities_;
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::size_t targets = 0;
};

/// Mini-batch RMSprop over the sampled loss. Pair order is reshuffled each
/// epoch; the whole trajectory is a function of (model, pairs, config, rng).
inline NteeModel train(NteeModel model, std::span<const TrainingPair> pairs, const NteeTrainConfig& cfg, Rng& rng,
                       const std::function<void(const EpochReport&)>& on_epoch = {}) {
  check_model(model);
  if (cfg.negatives < 1) throw std::invalid_argument("train: negatives must be >= 1");
  if (cfg.negatives > model.num_entities() - 1)
    throw std::invalid_argument("train: negatives must not exceed |V_entity| - 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  for (const auto& p : pairs) {
    for (auto w : p.tokens)
      if (w < 0 || static_cast<std::size_t>(w) >= model.num_words())
        throw std::invalid_argument("train: word id outside the model's word table");
    for (auto e : p.entities)
      if (e < 0 || static_cast<std::size_t>(e) >= model.num_entities())
        throw std::invalid_argument("train: entity id outside the model's entity table");
  }

  NteeOptimizer opt(model, cfg.optimizer);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<TrainingPair> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    EpochReport report{epoch + 1, 0.0, 0};
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(pairs[order[i]]);
      const auto sampled = sample_targets(batch, cfg.negatives, model.num_entities(), rng);
      NteeGradient g(model.dim());
      report.loss += accumulate_gradient(model, sampled, g);
      for (const auto& st : sampled) report.targets += st.targets.size();
      opt.apply(model, g, !cfg.fixed_embeddings);
    }
    if (on_epoch) on_epoch(report);
  }
  return model;
}

}  // namespace ntee
