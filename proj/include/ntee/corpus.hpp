// Annotated documents and the anchor statistics derived from them.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ntee/text.hpp"

namespace ntee {

struct Annotation {
  std::string surface;
  std::size_t start = 0;  // code points
  std::size_t end = 0;
  std::string entity;
  bool pseudo = false;  // document-level, offsetless

  bool operator==(const Annotation&) const = default;
};

struct AnnotatedDocument {
  std::string doc_id;
  std::optional<std::string> source_entity;
  std::string text;
  std::vector<Annotation> annotations;  // real ones sorted by start, pseudo last

  bool operator==(const AnnotatedDocument&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks annotations against the text; sorts real annotations by start.
inline void validate_document(AnnotatedDocument& doc) {
  const std::u32string text = decode_utf8(doc.text);
  auto pseudo_begin = std::stable_partition(doc.annotations.begin(), doc.annotations.end(),
                                            [](const Annotation& a) { return !a.pseudo; });
  std::sort(doc.annotations.begin(), pseudo_begin,
            [](const Annotation& a, const Annotation& b) { return a.start < b.start; });
  std::size_t prev_end = 0;
  for (auto it = doc.annotations.begin(); it != pseudo_begin; ++it) {
    const Annotation& a = *it;
    if (!(a.start < a.end) || a.end > text.size())
      throw CorpusError("document '" + doc.doc_id + "': annotation '" + a.surface + "' has invalid offsets [" +
                        std::to_string(a.start) + ", " + std::to_string(a.end) + ") for text of length " +
                        std::to_string(text.size()));
    if (a.start < prev_end)
      throw CorpusError("document '" + doc.doc_id + "': annotation at " + std::to_string(a.start) +
                        " overlaps the previous annotation");
    if (encode_utf8(std::u32string_view(text).substr(a.start, a.end - a.start)) != a.surface)
      throw CorpusError("document '" + doc.doc_id + "': surface '" + a.surface + "' does not match text at [" +
                        std::to_string(a.start) + ", " + std::to_string(a.end) + ")");
    if (a.entity.empty()) throw CorpusError("document '" + doc.doc_id + "': annotation with empty entity");
    prev_end = a.end;
  }
}

inline AnnotatedDocument parse_document(const nlohmann::json& j) {
  AnnotatedDocument doc;
  doc.doc_id = j.at("id").get<std::string>();
  if (j.contains("source_entity") && !j.at("source_entity").is_null())
    doc.source_entity = j.at("source_entity").get<std::string>();
  doc.text = j.at("text").get<std::string>();
  if (j.contains("annotations")) {
    for (const auto& a : j.at("annotations")) {
      Annotation ann;
      ann.surface = a.at("surface").get<std::string>();
      const auto start = a.at("start").get<std::int64_t>();
      const auto end = a.at("end").get<std::int64_t>();
      if (start < 0 || end < 0)
        throw CorpusError("document '" + doc.doc_id + "': negative annotation offset");
      ann.start = static_cast<std::size_t>(start);
      ann.end = static_cast<std::size_t>(end);
      ann.entity = a.at("entity").get<std::string>();
      doc.annotations.push_back(std::move(ann));
    }
  }
  validate_document(doc);
  return doc;
}

inline nlohmann::json to_json(const AnnotatedDocument& doc) {
  nlohmann::json anns = nlohmann::json::array();
  for (const auto& a : doc.annotations) {
    if (a.pseudo) continue;
    anns.push_back({{"surface", a.surface}, {"start", a.start}, {"end", a.end}, {"entity", a.entity}});
  }
  return {{"id", doc.doc_id},
          {"source_entity", doc.source_entity ? nlohmann::json(*doc.source_entity) : nlohmann::json(nullptr)},
          {"text", doc.text},
          {"annotations", anns}};
}

/// Reads line-delimited document records. Blank lines are skipped.
inline std::vector<AnnotatedDocument> load_corpus(std::istream& in) {
  std::vector<AnnotatedDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      docs.push_back(parse_document(nlohmann::json::parse(line)));
    } catch (const CorpusError& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  }
  return docs;
}

inline std::vector<AnnotatedDocument> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  return load_corpus(in);
}

/// Adds one document-level pseudo-annotation for the source entity. Idempotent.
inline void add_pseudo_annotations(std::span<AnnotatedDocument> docs) {
  for (auto& doc : docs) {
    if (!doc.source_entity) continue;
    const bool has = std::any_of(doc.annotations.begin(), doc.annotations.end(),
                                 [](const Annotation& a) { return a.pseudo; });
    if (has) continue;
    doc.annotations.push_back({"", 0, 0, *doc.source_entity, true});
  }
}

/// Anchor counts over real (non-pseudo) annotations with lowercased surfaces.
struct AnchorStats {
  std::map<std::pair<std::string, std::string>, std::uint64_t> pair_counts;
  std::map<std::string, std::uint64_t> entity_counts;
  std::map<std::string, std::uint64_t> surface_counts;

  void add(const std::string& surface, const std::string& entity, std::uint64_t n = 1) {
    const std::string s = to_lower(surface);
    pair_counts[{s, entity}] += n;
    entity_counts[entity] += n;
    surface_counts[s] += n;
  }

  std::uint64_t entity_count(const std::string& entity) const {
    auto it = entity_counts.find(entity);
    return it == entity_counts.end() ? 0 : it->second;
  }
  std::uint64_t surface_count(const std::string& lowered_surface) const {
    auto it = surface_counts.find(lowered_surface);
    return it == surface_counts.end() ? 0 : it->second;
  }
  std::uint64_t pair_count(const std::string& lowered_surface, const std::string& entity) const {
    auto it = pair_counts.find({lowered_surface, entity});
    return it == pair_counts.end() ? 0 : it->second;
  }

  /// Entities seen with a given lowercased surface, in title order.
  std::vector<std::string> entities_for(const std::string& lowered_surface) const {
    std::vector<std::string> out;
    for (auto it = pair_counts.lower_bound({lowered_surface, std::string()});
         it != pair_counts.end() && it->first.first == lowered_surface; ++it)
      out.push_back(it->first.second);
    return out;
  }
};

inline AnchorStats collect_anchor_stats(std::span<const AnnotatedDocument> docs) {
  AnchorStats stats;
  for (const auto& doc : docs)
    for (const auto& a : doc.annotations)
      if (!a.pseudo) stats.add(a.surface, a.entity);
  return stats;
}

}  // namespace ntee
