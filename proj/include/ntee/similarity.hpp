// Semantic textual similarity scoring and nearest-neighbour queries.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntee/model.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

struct StsPair {
  std::string sentence_a;
  std::string sentence_b;
  double gold = 0.0;
};

struct StsReport {
  double pearson_r = 0.0;
  double spearman_p = 0.0;
  std::size_t n = 0;
  std::vector<double> scores;
};

/// Cosine similarity of the two encoded sentences.
inline double pair_score(const NteeModel& m, const Vocabulary& vocab, std::string_view a, std::string_view b) {
  const Vec va = encode_text(m, vocab.word_ids(a));
  const Vec vb = encode_text(m, vocab.word_ids(b));
  return cosine(va, vb);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: constant sequence, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; ties share the average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

inline StsReport evaluate_sts(const NteeModel& m, const Vocabulary& vocab, std::span<const StsPair> pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("evaluate_sts: need at least 2 pairs");
  StsReport r;
  std::vector<double> gold;
  for (const auto& p : pairs) {
    r.scores.push_back(pair_score(m, vocab, p.sentence_a, p.sentence_b));
    gold.push_back(p.gold);
  }
  r.pearson_r = pearson(r.scores, gold);
  r.spearman_p = spearman(r.scores, gold);
  r.n = pairs.size();
  return r;
}

/// Tab-separated sentence_a, sentence_b, gold in [1,5].
inline std::vector<StsPair> load_sts_pairs(std::istream& in) {
  std::vector<StsPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw std::runtime_error("STS line " + std::to_string(line_no) + ": expected 3 fields");
    StsPair p{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), 0.0};
    try {
      std::size_t used = 0;
      const std::string g = line.substr(t2 + 1);
      p.gold = std::stod(g, &used);
      if (used != g.size()) throw std::invalid_argument(g);
    } catch (const std::exception&) {
      throw std::runtime_error("STS line " + std::to_string(line_no) + ": gold rating is not a number");
    }
    if (!(p.gold >= 1.0 && p.gold <= 5.0))
      throw std::runtime_error("STS line " + std::to_string(line_no) + ": gold rating outside [1,5]");
    out.push_back(std::move(p));
  }
  return out;
}

enum class ItemKind { word, entity };

struct Neighbor {
  std::int32_t id = 0;
  std::string item;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Items of the query's kind ranked by cosine (descending, ties by id),
/// excluding the query itself.
inline std::vector<Neighbor> nearest_neighbors(const NteeModel& m, const Vocabulary& vocab, ItemKind kind,
                                               std::string_view query, std::size_t top_n) {
  const auto qid = kind == ItemKind::word ? vocab.lookup_word(query) : vocab.lookup_entity(query);
  if (!qid) throw std::invalid_argument("nearest_neighbors: '" + std::string(query) + "' is not in the vocabulary");
  const Mat& table = kind == ItemKind::word ? m.word_emb : m.entity_emb;
  const auto q = table.row(*qid);
  std::vector<Neighbor> all;
  all.reserve(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (static_cast<std::int32_t>(i) == *qid) continue;
    all.push_back({static_cast<std::int32_t>(i), kind == ItemKind::word ? vocab.word(i) : vocab.entity(i),
                   cosine(q, table.row(i))});
  }
  const std::size_t n = std::min(top_n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
                    });
  all.resize(n);
  return all;
}

}  // namespace ntee
