// Factoid QA as classification over a fixed answer-entity set, with
// end-to-end fine-tuning of the text-entity model through the features.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntee/mlp.hpp"
#include "ntee/model.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

struct QaExample {
  std::string question;
  std::string answer;

  bool operator==(const QaExample&) const = default;
};

struct QaDataset {
  std::vector<QaExample> train, dev, test;
  std::vector<std::string> answers;  // sorted; candidate set for every question

  bool operator==(const QaDataset&) const = default;
};

/// Keeps answers with at least `min_answer_count` questions. Per answer the
/// questions are shuffled; dev and test each take floor(0.2n) and train keeps the rest.
inline QaDataset build_qa_dataset(std::span<const QaExample> examples, std::size_t min_answer_count, Rng& rng) {
  std::map<std::string, std::vector<std::string>> by_answer;
  for (const auto& ex : examples) by_answer[ex.answer].push_back(ex.question);
  QaDataset ds;
  for (auto& [answer, questions] : by_answer) {
    if (questions.size() < min_answer_count) continue;
    ds.answers.push_back(answer);
    rng.shuffle(std::span(questions));
    const std::size_t n = questions.size();
    const std::size_t n_dev = n / 5;
    const std::size_t n_test = n / 5;
    for (std::size_t i = 0; i < n; ++i) {
      auto& split = i < n_dev ? ds.dev : i < n_dev + n_test ? ds.test : ds.train;
      split.push_back({questions[i], answer});
    }
  }
  if (ds.answers.empty()) throw std::runtime_error("build_qa_dataset: no answer reaches the minimum question count");
  return ds;
}

/// Line-delimited {question, answer} records.
inline std::vector<QaExample> load_qa_examples(std::istream& in) {
  std::vector<QaExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("question").get<std::string>(), j.at("answer").get<std::string>()});
    } catch (const std::exception& e) {
      throw std::runtime_error("QA line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Line-delimited {question, answer, split}.
inline void save_qa_dataset(std::ostream& out, const QaDataset& ds) {
  auto write = [&](const std::vector<QaExample>& xs, const char* split) {
    for (const auto& x : xs)
      out << nlohmann::json{{"question", x.question}, {"answer", x.answer}, {"split", split}}.dump() << '\n';
  };
  write(ds.train, "train");
  write(ds.dev, "dev");
  write(ds.test, "test");
}

inline QaDataset load_qa_dataset(std::istream& in) {
  QaDataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> answers;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("QA dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    QaExample x{j.at("question").get<std::string>(), j.at("answer").get<std::string>()};
    const auto split = j.at("split").get<std::string>();
    answers.push_back(x.answer);
    if (split == "train") ds.train.push_back(std::move(x));
    else if (split == "dev") ds.dev.push_back(std::move(x));
    else if (split == "test") ds.test.push_back(std::move(x));
    else throw std::runtime_error("QA dataset line " + std::to_string(line_no) + ": unknown split '" + split + "'");
  }
  std::sort(answers.begin(), answers.end());
  answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
  ds.answers = std::move(answers);
  return ds;
}

inline const std::vector<QaExample>& split_of(const QaDataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "dev") return ds.dev;
  if (name == "test") return ds.test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, dev or test)");
}

/// [unit v_e, v_t, unit v_e . v_t]; the entity block is zero for unknown answers.
inline Vec qa_features(std::span<const double> unit_entity, std::span<const double> vt) {
  Vec f(unit_entity.begin(), unit_entity.end());
  f.insert(f.end(), vt.begin(), vt.end());
  f.push_back(dot(unit_entity, vt));
  return f;
}

inline Vec unit_row(const Mat& table, std::optional<std::int32_t> id) {
  Vec v(table.cols(), 0.0);
  if (!id) return v;
  const auto row = table.row(*id);
  const double n = norm2(row);
  if (n == 0.0) return v;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = row[i] / n;
  return v;
}

inline Vec featurize_question(const NteeModel& model, const Vocabulary& vocab, std::string_view question,
                              std::string_view answer) {
  const Vec vt = encode_text(model, vocab.word_ids(question));
  return qa_features(unit_row(model.entity_emb, vocab.lookup_entity(answer)), vt);
}

/// Answer list resolved against an entity vocabulary.
struct AnswerSet {
  std::vector<std::string> names;
  std::vector<std::optional<std::int32_t>> ids;
  std::map<std::string, std::size_t> index;

  AnswerSet(const std::vector<std::string>& answers, const Vocabulary& vocab) : names(answers) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      ids.push_back(vocab.lookup_entity(names[i]));
      index[names[i]] = i;
    }
  }
};

/// Cross-entropy over all answers for one question. Adds MLP gradients into
/// `mg`; when `ng` is given, model gradients flow down to the word and entity rows.
inline double qa_accumulate_gradient(const NteeModel& model, const MlpModel& mlp, const AnswerSet& answers,
                                     std::span<const std::int32_t> tokens, std::size_t gold, double dropout, Rng* rng,
                                     MlpGradient& mg, NteeGradient* ng) {
  const EncodedText enc = encode_text_detailed(model, tokens);
  std::vector<Vec> units;
  std::vector<Vec> feats;
  units.reserve(answers.ids.size());
  for (const auto& id : answers.ids) {
    units.push_back(unit_row(model.entity_emb, id));
    feats.push_back(qa_features(units.back(), enc.vt));
  }
  std::vector<Vec> fgrads;
  const double l = accumulate_mlp_gradient(mlp, feats, gold, dropout, rng, mg, ng ? &fgrads : nullptr);
  if (!ng) return l;
  const std::size_t d = model.dim();
  Vec grad_vt(d, 0.0);
  for (std::size_t j = 0; j < feats.size(); ++j) {
    const auto& fg = fgrads[j];
    const double gdot = fg[2 * d];
    for (std::size_t i = 0; i < d; ++i) grad_vt[i] += fg[d + i] + gdot * units[j][i];
    if (!answers.ids[j]) continue;
    const auto row = model.entity_emb.row(*answers.ids[j]);
    const double n = norm2(row);
    if (n == 0.0) continue;
    Vec grad_unit(d);
    for (std::size_t i = 0; i < d; ++i) grad_unit[i] = fg[i] + gdot * enc.vt[i];
    // d unit / d v = (I - u u^T) / |v|
    const double proj = dot(grad_unit, units[j]);
    Vec& target = ng->entity_row(*answers.ids[j]);
    for (std::size_t i = 0; i < d; ++i) target[i] += (grad_unit[i] - proj * units[j][i]) / n;
  }
  backprop_encoder(model, enc, tokens, grad_vt, *ng);
  return l;
}

/// Top-1 accuracy over the answer set; ties resolve to the lowest answer index.
inline double evaluate_qa(const MlpModel& mlp, const NteeModel& model, const Vocabulary& vocab,
                          const std::vector<std::string>& answers, std::span<const QaExample> split) {
  if (split.empty()) throw std::invalid_argument("evaluate_qa: empty split");
  const AnswerSet set(answers, vocab);
  std::vector<Vec> units;
  for (const auto& id : set.ids) units.push_back(unit_row(model.entity_emb, id));
  std::size_t correct = 0;
  for (const auto& q : split) {
    const Vec vt = encode_text(model, vocab.word_ids(q.question));
    std::vector<Vec> feats;
    for (const auto& u : units) feats.push_back(qa_features(u, vt));
    const auto gold = set.index.find(q.answer);
    correct += gold != set.index.end() && predict(mlp, feats).index == gold->second;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

struct QaTrainResult {
  MlpModel mlp;
  NteeModel model;
  std::size_t best_epoch = 0;
  double best_score = -1.0;
};

/// Mini-batch RMSprop over MLP and (unless `fine_tune` is false) every model
/// parameter. The checkpoint with the best dev accuracy is returned (training
/// accuracy when dev is empty).
inline QaTrainResult train_qa(NteeModel model, const Vocabulary& vocab, const MlpConfig& cfg, const QaDataset& ds,
                              Rng& rng, bool fine_tune = true,
                              const std::function<void(std::size_t, double)>& on_epoch = {}) {
  cfg.validate();
  check_model(model);
  if (ds.train.empty()) throw std::invalid_argument("train_qa: empty training split");
  const AnswerSet answers(ds.answers, vocab);
  struct Item {
    std::vector<std::int32_t> tokens;
    std::size_t gold;
  };
  std::vector<Item> items;
  for (const auto& q : ds.train) {
    auto it = answers.index.find(q.answer);
    if (it == answers.index.end()) throw std::invalid_argument("train_qa: answer '" + q.answer + "' not in answer set");
    items.push_back({vocab.word_ids(q.question), it->second});
  }

  MlpModel mlp = make_mlp(2 * model.dim() + 1, cfg.hidden_units, rng);
  MlpOptimizer mopt(mlp, cfg.optimizer);
  NteeOptimizer nopt(model, cfg.optimizer);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  QaTrainResult best{mlp, model, 0, -1.0};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      MlpGradient mg(mlp);
      NteeGradient ng(model.dim());
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        const Item& it = items[order[i]];
        qa_accumulate_gradient(model, mlp, answers, it.tokens, it.gold, cfg.dropout, &rng, mg,
                               fine_tune ? &ng : nullptr);
      }
      mopt.apply(mlp, mg);
      if (fine_tune) nopt.apply(model, ng, true);
    }
    const auto& eval_split = ds.dev.empty() ? ds.train : ds.dev;
    const double acc = evaluate_qa(mlp, model, vocab, ds.answers, eval_split);
    if (on_epoch) on_epoch(epoch, acc);
    if (acc > best.best_score) best = {mlp, model, epoch, acc};
  }
  return best;
}

}  // namespace ntee
