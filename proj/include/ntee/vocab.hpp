// Word and entity vocabularies with frequency thresholds.
#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ntee/corpus.hpp"
#include "ntee/text.hpp"

namespace ntee {

struct VocabConfig {
  std::uint64_t min_word_count = 5;
  std::uint64_t min_entity_count = 3;
};

/// Ids are contiguous from 0 within each kind, assigned by descending count
/// with ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::pair<std::string, std::uint64_t>> words,
             std::vector<std::pair<std::string, std::uint64_t>> entities) {
    for (auto& [w, c] : words) add(w, c, words_, word_counts_, word_index_);
    for (auto& [e, c] : entities) add(e, c, entities_, entity_counts_, entity_index_);
  }

  std::size_t num_words() const { return words_.size(); }
  std::size_t num_entities() const { return entities_.size(); }
  /// |V| = words + entities.
  std::size_t size() const { return words_.size() + entities_.size(); }

  const std::string& word(std::size_t id) const { return words_.at(id); }
  const std::string& entity(std::size_t id) const { return entities_.at(id); }
  std::uint64_t word_count(std::size_t id) const { return word_counts_.at(id); }
  std::uint64_t entity_count(std::size_t id) const { return entity_counts_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& entities() const { return entities_; }

  std::optional<std::int32_t> lookup_word(std::string_view w) const {
    auto it = word_index_.find(std::string(w));
    if (it == word_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::int32_t> lookup_entity(std::string_view e) const {
    auto it = entity_index_.find(std::string(e));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }

  /// In-vocabulary word ids of a text, in order.
  std::vector<std::int32_t> word_ids(std::string_view text) const {
    std::vector<std::int32_t> ids;
    for (const auto& tok : tokenize(text))
      if (auto id = lookup_word(tok)) ids.push_back(*id);
    return ids;
  }

  bool operator==(const Vocabulary& o) const {
    return words_ == o.words_ && entities_ == o.entities_ && word_counts_ == o.word_counts_ &&
           entity_counts_ == o.entity_counts_;
  }

 private:
  static void add(const std::string& s, std::uint64_t c, std::vector<std::string>& names,
                  std::vector<std::uint64_t>& counts, std::unordered_map<std::string, std::int32_t>& index) {
    if (!index.emplace(s, static_cast<std::int32_t>(names.size())).second)
      throw std::invalid_argument("vocabulary: duplicate entry '" + s + "'");
    names.push_back(s);
    counts.push_back(c);
  }

  std::vector<std::string> words_, entities_;
  std::vector<std::uint64_t> word_counts_, entity_counts_;
  std::unordered_map<std::string, std::int32_t> word_index_, entity_index_;
};

namespace detail {
inline std::vector<std::pair<std::string, std::uint64_t>> retain(const std::map<std::string, std::uint64_t>& counts,
                                                                 std::uint64_t min_count) {
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [s, c] : counts)
    if (c >= min_count) kept.emplace_back(s, c);
  // std::map iteration is lexicographic, so a stable sort by count keeps the tie order.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return kept;
}
}  // namespace detail

/// Words are counted over the tokenized full text of every document; entities
/// over every annotation, pseudo-annotations included.
inline Vocabulary build_vocab(std::span<const AnnotatedDocument> docs, const VocabConfig& cfg = {}) {
  std::map<std::string, std::uint64_t> words, entities;
  for (const auto& doc : docs) {
    for (const auto& tok : tokenize(doc.text)) ++words[tok];
    for (const auto& a : doc.annotations) ++entities[a.entity];
  }
  auto kept_words = detail::retain(words, cfg.min_word_count);
  auto kept_entities = detail::retain(entities, cfg.min_entity_count);
  if (kept_words.empty()) throw std::runtime_error("build_vocab: no word reaches the minimum count");
  if (kept_entities.empty()) throw std::runtime_error("build_vocab: no entity reaches the minimum count");
  return Vocabulary(std::move(kept_words), std::move(kept_entities));
}

/// kind TAB surface TAB count TAB id, one line per type.
inline void save_vocab(std::ostream& out, const Vocabulary& v) {
  for (std::size_t i = 0; i < v.num_words(); ++i)
    out << "word\t" << v.word(i) << '\t' << v.word_count(i) << '\t' << i << '\n';
  for (std::size_t i = 0; i < v.num_entities(); ++i)
    out << "entity\t" << v.entity(i) << '\t' << v.entity_count(i) << '\t' << i << '\n';
}

inline Vocabulary load_vocab(std::istream& in) {
  std::vector<std::pair<std::string, std::uint64_t>> words, entities;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (;;) {
      const auto tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 4) throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": expected 4 fields");
    auto& target = fields[0] == "word" ? words : fields[0] == "entity" ? entities : throw std::runtime_error(
        "vocabulary line " + std::to_string(line_no) + ": unknown kind '" + fields[0] + "'");
    const auto id = std::stoull(fields[3]);
    if (id != target.size())
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": ids must be contiguous");
    target.emplace_back(fields[1], std::stoull(fields[2]));
  }
  return Vocabulary(std::move(words), std::move(entities));
}

inline std::string vocab_to_string(const Vocabulary& v) {
  std::ostringstream os;
  save_vocab(os, v);
  return os.str();
}

inline Vocabulary vocab_from_string(const std::string& s) {
  std::istringstream is(s);
  return load_vocab(is);
}

}  // namespace ntee
