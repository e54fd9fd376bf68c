// Candidate scorer shared by entity linking and QA. A ReLU hidden layer with
// inverted dropout gives one logit per candidate; softmax runs across candidates.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ntee/numerics.hpp"

namespace ntee {

struct MlpModel {
  Mat W1;  // hidden x feature_dim
  Vec b1;
  Vec w2;  // hidden
  double b2 = 0.0;

  std::size_t hidden() const { return W1.rows(); }
  std::size_t feature_dim() const { return W1.cols(); }

  bool operator==(const MlpModel&) const = default;
};

struct MlpConfig {
  std::size_t hidden_units = 100;
  double dropout = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  RmspropConfig optimizer{};
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_units < 1) throw std::invalid_argument("mlp: hidden_units must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("mlp: dropout must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("mlp: batch_size must be >= 1");
  }
};

inline MlpModel make_mlp(std::size_t feature_dim, std::size_t hidden, Rng& rng) {
  MlpModel m{glorot_init(hidden, feature_dim, rng), Vec(hidden, 0.0), {}, 0.0};
  const Mat w2 = glorot_init(hidden, 1, rng);
  m.w2.assign(w2.values().begin(), w2.values().end());
  return m;
}

struct MlpForward {
  Vec pre;    // W1 f + b1
  Vec scale;  // per-unit dropout multiplier: 0 or 1/(1-p); all 1 in eval mode
  Vec h;      // relu(pre) * scale
  double logit = 0.0;
};

/// `rng == nullptr` is eval mode (no dropout).
inline MlpForward mlp_forward(const MlpModel& m, std::span<const double> features, double dropout, Rng* rng) {
  if (features.size() != m.feature_dim())
    throw std::invalid_argument("mlp: feature length " + std::to_string(features.size()) + " != " +
                                std::to_string(m.feature_dim()));
  MlpForward f;
  f.pre = matvec(m.W1, features);
  axpy(1.0, m.b1, f.pre);
  f.scale.assign(m.hidden(), 1.0);
  if (rng != nullptr && dropout > 0.0) {
    for (double& s : f.scale) s = rng->uniform() < dropout ? 0.0 : 1.0 / (1.0 - dropout);
  }
  f.h.resize(m.hidden());
  for (std::size_t i = 0; i < m.hidden(); ++i) f.h[i] = std::max(0.0, f.pre[i]) * f.scale[i];
  f.logit = dot(m.w2, f.h) + m.b2;
  return f;
}

inline double logit(const MlpModel& m, std::span<const double> features) {
  return mlp_forward(m, features, 0.0, nullptr).logit;
}

inline double logit(const MlpModel& m, std::span<const double> features, double dropout, Rng& rng) {
  return mlp_forward(m, features, dropout, &rng).logit;
}

inline Vec softmax_over_candidates(std::span<const double> logits) { return softmax(logits); }

struct MlpGradient {
  Mat W1;
  Vec b1;
  Vec w2;
  double b2 = 0.0;

  explicit MlpGradient(const MlpModel& m)
      : W1(m.hidden(), m.feature_dim(), 0.0), b1(m.hidden(), 0.0), w2(m.hidden(), 0.0) {}
};

/// Feature vectors for each candidate and the index of the correct one.
struct CandidateSet {
  std::vector<Vec> features;
  std::size_t gold = 0;
};

/// Cross-entropy -log softmax(logits)[gold]; adds its gradient into g and,
/// when requested, writes d loss / d features for every candidate.
inline double accumulate_mlp_gradient(const MlpModel& m, std::span<const Vec> candidates, std::size_t gold,
                                      double dropout, Rng* rng, MlpGradient& g,
                                      std::vector<Vec>* feature_grads = nullptr) {
  if (candidates.empty()) throw std::invalid_argument("mlp: empty candidate set");
  if (gold >= candidates.size()) throw std::invalid_argument("mlp: gold index out of range");
  std::vector<MlpForward> fw;
  fw.reserve(candidates.size());
  Vec logits;
  for (const auto& c : candidates) {
    fw.push_back(mlp_forward(m, c, dropout, rng));
    logits.push_back(fw.back().logit);
  }
  const Vec p = softmax(logits);
  const double loss = log_sum_exp(logits) - logits[gold];
  if (feature_grads) feature_grads->assign(candidates.size(), Vec());
  Vec dpre(m.hidden());
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const double c = p[j] - (j == gold ? 1.0 : 0.0);
    axpy(c, fw[j].h, g.w2);
    g.b2 += c;
    for (std::size_t i = 0; i < m.hidden(); ++i)
      dpre[i] = fw[j].pre[i] > 0.0 ? c * m.w2[i] * fw[j].scale[i] : 0.0;
    add_outer(1.0, dpre, candidates[j], g.W1);
    axpy(1.0, dpre, g.b1);
    if (feature_grads) (*feature_grads)[j] = matvec_transposed(m.W1, dpre);
  }
  return loss;
}

class MlpOptimizer {
 public:
  MlpOptimizer(const MlpModel& m, const RmspropConfig& cfg)
      : W1_(m.W1.size(), cfg), b1_(m.b1.size(), cfg), w2_(m.w2.size(), cfg), b2_(1, cfg) {}

  void apply(MlpModel& m, const MlpGradient& g) {
    rmsprop_update(m.W1, g.W1, W1_, "mlp.W1");
    rmsprop_update(m.b1, g.b1, b1_, "mlp.b1");
    rmsprop_update(m.w2, g.w2, w2_, "mlp.w2");
    rmsprop_update(std::span(&m.b2, 1), std::span(&g.b2, 1), b2_, "mlp.b2");
  }

 private:
  RmspropState W1_, b1_, w2_, b2_;
};

/// One RMSprop step on a single example.
inline double train_step(MlpModel& m, const CandidateSet& example, const MlpConfig& cfg, MlpOptimizer& opt,
                         Rng& rng) {
  MlpGradient g(m);
  const double l = accumulate_mlp_gradient(m, example.features, example.gold, cfg.dropout, &rng, g);
  opt.apply(m, g);
  return l;
}

struct Prediction {
  std::size_t index = 0;
  Vec probabilities;
};

/// Eval-mode argmax; ties go to the lowest index.
inline Prediction predict(const MlpModel& m, std::span<const Vec> candidates) {
  if (candidates.empty()) throw std::invalid_argument("predict: empty candidate set");
  Vec logits;
  for (const auto& c : candidates) logits.push_back(logit(m, c));
  Prediction p{static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin()),
               softmax(logits)};
  return p;
}

inline double candidate_accuracy(const MlpModel& m, std::span<const CandidateSet> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) correct += predict(m, ex.features).index == ex.gold;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

struct MlpTrainResult {
  MlpModel model;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
  std::vector<double> epoch_scores;
};

/// Mini-batch training with best-epoch checkpointing. `score` ranks epochs
/// (dev accuracy); training accuracy is used when it is empty. Earliest best
/// epoch wins ties.
inline MlpTrainResult train_mlp(MlpModel model, std::span<const CandidateSet> examples, const MlpConfig& cfg, Rng& rng,
                                const std::function<double(const MlpModel&)>& score = {}) {
  cfg.validate();
  MlpOptimizer opt(model, cfg.optimizer);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  MlpTrainResult result{model, 0, -1.0, {}};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      MlpGradient g(model);
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        const auto& ex = examples[order[i]];
        accumulate_mlp_gradient(model, ex.features, ex.gold, cfg.dropout, &rng, g);
      }
      opt.apply(model, g);
    }
    const double s = score ? score(model) : candidate_accuracy(model, examples);
    result.epoch_scores.push_back(s);
    if (s > result.best_score) {
      result.best_score = s;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

}  // namespace ntee
