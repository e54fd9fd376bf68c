// (text, entity set) supervision pairs at sentence or paragraph granularity.
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntee/corpus.hpp"
#include "ntee/text.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

enum class Granularity { sentence, paragraph };

inline Granularity parse_granularity(const std::string& s) {
  if (s == "sentence") return Granularity::sentence;
  if (s == "paragraph") return Granularity::paragraph;
  throw std::invalid_argument("unknown granularity '" + s + "' (expected sentence or paragraph)");
}

inline const char* to_string(Granularity g) { return g == Granularity::sentence ? "sentence" : "paragraph"; }

struct TrainingPair {
  std::vector<std::int32_t> tokens;    // word ids
  std::vector<std::int32_t> entities;  // sorted, unique entity ids

  bool operator==(const TrainingPair&) const = default;
};

/// Sentence mode: a token or annotation belongs to the sentence containing its
/// start offset, and the pseudo-annotation is inherited by every sentence.
/// Pairs with no in-vocabulary token or no in-vocabulary entity are dropped.
inline std::vector<TrainingPair> make_training_pairs(std::span<const AnnotatedDocument> docs,
                                                     Granularity granularity, const Vocabulary& vocab) {
  std::vector<TrainingPair> pairs;
  for (const auto& doc : docs) {
    const std::u32string text = decode_utf8(doc.text);
    const auto tokens = tokenize_spans(text);
    std::vector<Span> spans;
    if (granularity == Granularity::paragraph) {
      spans.emplace_back(0, text.size());
    } else {
      spans = split_sentences(std::u32string_view(text));
    }
    std::vector<std::int32_t> pseudo;
    for (const auto& a : doc.annotations)
      if (a.pseudo)
        if (auto id = vocab.lookup_entity(a.entity)) pseudo.push_back(*id);

    std::size_t next_token = 0;
    for (const auto& [begin, end] : spans) {
      TrainingPair pair;
      for (; next_token < tokens.size() && tokens[next_token].start < end; ++next_token)
        if (auto id = vocab.lookup_word(tokens[next_token].text)) pair.tokens.push_back(*id);
      pair.entities = pseudo;
      for (const auto& a : doc.annotations) {
        if (a.pseudo || a.start < begin || a.start >= end) continue;
        if (auto id = vocab.lookup_entity(a.entity)) pair.entities.push_back(*id);
      }
      std::sort(pair.entities.begin(), pair.entities.end());
      pair.entities.erase(std::unique(pair.entities.begin(), pair.entities.end()), pair.entities.end());
      if (pair.tokens.empty() || pair.entities.empty()) continue;
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

}  // namespace ntee
