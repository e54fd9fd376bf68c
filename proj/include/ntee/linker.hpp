// Entity linking: candidates come from an anchor-based mention dictionary and
// an MLP over candidate features picks one.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntee/corpus.hpp"
#include "ntee/mlp.hpp"
#include "ntee/model.hpp"
#include "ntee/text.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

/// log(|anchors pointing to e| + 1)
inline double entity_popularity(const AnchorStats& stats, const std::string& entity) {
  return std::log(static_cast<double>(stats.entity_count(entity)) + 1.0);
}

/// |anchors with surface m pointing to e| / |anchors with surface m|, 0 for unseen surfaces.
inline double prior_probability(const AnchorStats& stats, const std::string& surface, const std::string& entity) {
  const std::string m = to_lower(surface);
  const auto total = stats.surface_count(m);
  if (total == 0) return 0.0;
  return static_cast<double>(stats.pair_count(m, entity)) / static_cast<double>(total);
}

/// Display form of an entity title: underscores read as spaces.
inline std::string title_text(std::string_view entity) {
  std::string s(entity);
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

/// Drops parenthesised segments such as "(genre)" and trims.
inline std::string strip_parenthetical(std::string_view title) {
  std::string out;
  int depth = 0;
  for (char c : title) {
    if (c == '(') ++depth;
    else if (c == ')' && depth > 0) --depth;
    else if (depth == 0) out.push_back(c);
  }
  const auto b = out.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(' ');
  return out.substr(b, e - b + 1);
}

struct Candidate {
  std::string entity;
  double popularity = 0.0;

  bool operator==(const Candidate&) const = default;
};

struct MentionDictionary {
  std::map<std::string, std::vector<Candidate>> entries;  // lowercased surface -> ranked candidates
  std::map<std::string, std::string> redirects;           // alias -> canonical entity
  std::set<std::string> titles;

  const std::vector<Candidate>* find(std::string_view surface) const {
    auto it = entries.find(to_lower(surface));
    return it == entries.end() ? nullptr : &it->second;
  }
};

/// Each entity is reachable from its title and the title's tokens of two or
/// more characters, with parenthesised qualifiers dropped. Redirect aliases and
/// anchor texts add further surfaces. Candidates are ranked by popularity with
/// ties by title, then cut to `max_candidates`.
inline MentionDictionary build_mention_dictionary(std::span<const std::string> kb_entities,
                                                  const std::map<std::string, std::string>& redirects,
                                                  const AnchorStats& stats, std::size_t max_candidates = 100) {
  MentionDictionary dict;
  dict.redirects = redirects;
  std::map<std::string, std::set<std::string>> surfaces;
  auto add_title = [&](const std::string& title, const std::string& entity) {
    const std::string text = title_text(title);
    surfaces[to_lower(text)].insert(entity);
    for (const auto& tok : tokenize(strip_parenthetical(text)))
      if (utf8_length(tok) >= 2) surfaces[tok].insert(entity);
  };
  for (const auto& e : kb_entities) {
    dict.titles.insert(e);
    add_title(e, e);
  }
  for (const auto& [alias, target] : redirects) {
    dict.titles.insert(target);
    surfaces[to_lower(title_text(alias))].insert(target);
  }
  for (const auto& [key, count] : stats.pair_counts) {
    if (count > 0) surfaces[key.first].insert(key.second);
  }
  for (auto& [surface, ents] : surfaces) {
    std::vector<Candidate> cands;
    cands.reserve(ents.size());
    for (const auto& e : ents) cands.push_back({e, entity_popularity(stats, e)});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.popularity != b.popularity ? a.popularity > b.popularity : a.entity < b.entity;
    });
    if (cands.size() > max_candidates) cands.resize(max_candidates);
    dict.entries.emplace(surface, std::move(cands));
  }
  return dict;
}

/// Every entity mentioned in a corpus: annotation targets and source entities.
inline std::vector<std::string> corpus_entities(std::span<const AnnotatedDocument> docs) {
  std::set<std::string> s;
  for (const auto& d : docs) {
    if (d.source_entity) s.insert(*d.source_entity);
    for (const auto& a : d.annotations) s.insert(a.entity);
  }
  return {s.begin(), s.end()};
}

/// surface TAB entity TAB popularity, sorted by surface then rank.
inline void save_dictionary(std::ostream& out, const MentionDictionary& dict) {
  out << std::setprecision(17);
  for (const auto& [surface, cands] : dict.entries)
    for (const auto& c : cands) out << surface << '\t' << c.entity << '\t' << c.popularity << '\n';
}

inline MentionDictionary load_dictionary(std::istream& in) {
  MentionDictionary dict;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("dictionary line " + std::to_string(line_no) + ": expected 3 fields");
    const std::string entity = line.substr(t1 + 1, t2 - t1 - 1);
    dict.entries[line.substr(0, t1)].push_back({entity, std::stod(line.substr(t2 + 1))});
    dict.titles.insert(entity);
  }
  return dict;
}

struct Mention {
  std::string doc_id;
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string gold_entity;
};

inline std::vector<Mention> load_mentions(std::istream& in) {
  std::vector<Mention> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto start = j.at("start").get<std::int64_t>();
      const auto end = j.at("end").get<std::int64_t>();
      if (start < 0 || end <= start) throw std::invalid_argument("invalid offsets");
      out.push_back({j.at("doc_id").get<std::string>(), j.at("surface").get<std::string>(),
                     static_cast<std::size_t>(start), static_cast<std::size_t>(end),
                     j.at("gold_entity").get<std::string>()});
    } catch (const std::exception& e) {
      throw std::runtime_error("mentions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json to_json(const Mention& m) {
  return {{"doc_id", m.doc_id}, {"surface", m.surface}, {"start", m.start}, {"end", m.end},
          {"gold_entity", m.gold_entity}};
}

inline std::vector<std::string> generate_candidates(const MentionDictionary& dict, const Mention& mention) {
  std::vector<std::string> out;
  if (const auto* c = dict.find(mention.surface))
    for (const auto& cand : *c) out.push_back(cand.entity);
  return out;
}

struct ElFeatures {
  double popularity = 0.0;
  double prior = 0.0;
  double max_prior = 0.0;
  std::array<bool, 4> strsim{};  // equals, contains, starts with, ends with
};

/// Case-folded comparisons of the entity title against the mention surface.
inline std::array<bool, 4> string_similarity(std::string_view entity, std::string_view surface) {
  const std::string t = to_lower(title_text(entity));
  const std::string s = to_lower(surface);
  return {t == s, t.find(s) != std::string::npos, t.starts_with(s), t.ends_with(s)};
}

/// max_prior is the largest prior(m', e) over the mention surfaces m' of the document.
inline ElFeatures el_features(const AnchorStats& stats, const std::string& surface, const std::string& entity,
                              std::span<const std::string> document_surfaces) {
  ElFeatures f;
  f.popularity = entity_popularity(stats, entity);
  f.prior = prior_probability(stats, surface, entity);
  f.max_prior = f.prior;
  for (const auto& s : document_surfaces) f.max_prior = std::max(f.max_prior, prior_probability(stats, s, entity));
  f.strsim = string_similarity(entity, surface);
  return f;
}

/// Unit-length entity vector; zeros when the entity is unknown or zero.
inline Vec unit_entity_vector(const NteeModel& model, const Vocabulary& vocab, std::string_view entity) {
  Vec v(model.dim(), 0.0);
  const auto id = vocab.lookup_entity(entity);
  if (!id) return v;
  const auto row = model.entity_emb.row(*id);
  const double n = norm2(row);
  if (n == 0.0) return v;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = row[i] / n;
  return v;
}

struct LinkerContext {
  const NteeModel& model;
  const Vocabulary& vocab;
  const MentionDictionary& dict;
  const AnchorStats& stats;
  bool strsim = true;

  std::size_t feature_dim() const { return 2 * model.dim() + 4 + (strsim ? 4 : 0); }
};

/// [unit v_e, v_t, unit v_e . v_t, popularity, prior, max_prior, strsim...]
inline Vec build_feature_vector(const LinkerContext& ctx, std::span<const double> document_vector,
                                const std::string& surface, const std::string& entity,
                                std::span<const std::string> document_surfaces) {
  const Vec ve = unit_entity_vector(ctx.model, ctx.vocab, entity);
  const ElFeatures f = el_features(ctx.stats, surface, entity, document_surfaces);
  Vec out;
  out.reserve(ctx.feature_dim());
  out.insert(out.end(), ve.begin(), ve.end());
  out.insert(out.end(), document_vector.begin(), document_vector.end());
  out.push_back(dot(ve, document_vector));
  out.push_back(f.popularity);
  out.push_back(f.prior);
  out.push_back(f.max_prior);
  if (ctx.strsim)
    for (bool b : f.strsim) out.push_back(b ? 1.0 : 0.0);
  return out;
}

/// Convenience form that encodes the document itself.
inline Vec build_feature_vector(const LinkerContext& ctx, const AnnotatedDocument& doc, const Mention& mention,
                                const std::string& entity, std::span<const Mention> all_mentions) {
  const Vec vt = encode_text(ctx.model, ctx.vocab.word_ids(doc.text));
  std::vector<std::string> surfaces;
  for (const auto& m : all_mentions)
    if (m.doc_id == mention.doc_id) surfaces.push_back(m.surface);
  return build_feature_vector(ctx, vt, mention.surface, entity, surfaces);
}

using DocumentIndex = std::map<std::string, const AnnotatedDocument*>;

inline DocumentIndex index_documents(std::span<const AnnotatedDocument> docs) {
  DocumentIndex idx;
  for (const auto& d : docs) idx[d.doc_id] = &d;
  return idx;
}

/// Mentions grouped with per-document encodings and candidate features.
struct LinkerExamples {
  std::vector<CandidateSet> sets;                 // one per usable mention
  std::vector<std::size_t> mention_index;         // position in the input list
  std::vector<std::vector<std::string>> entities; // candidate entities, parallel to sets
  std::size_t skipped = 0;                        // gold absent from candidates
  std::size_t without_candidates = 0;
};

/// With `require_gold`, mentions whose gold entity is not a candidate are
/// skipped and counted; otherwise gold is set to the candidate list size
/// when absent (never predicted).
inline LinkerExamples make_linker_examples(const LinkerContext& ctx, const DocumentIndex& docs,
                                           std::span<const Mention> mentions, bool require_gold) {
  std::map<std::string, std::vector<std::string>> surfaces_by_doc;
  for (const auto& m : mentions) surfaces_by_doc[m.doc_id].push_back(m.surface);
  std::map<std::string, Vec> vt_cache;
  LinkerExamples out;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    const Mention& m = mentions[i];
    auto dit = docs.find(m.doc_id);
    if (dit == docs.end()) throw std::runtime_error("mention refers to unknown document '" + m.doc_id + "'");
    const AnnotatedDocument& doc = *dit->second;
    const std::u32string text = decode_utf8(doc.text);
    if (m.end > text.size() || m.start >= m.end ||
        encode_utf8(std::u32string_view(text).substr(m.start, m.end - m.start)) != m.surface)
      throw std::runtime_error("mention '" + m.surface + "' has offsets that do not match document '" + m.doc_id + "'");

    auto cands = generate_candidates(ctx.dict, m);
    if (cands.empty()) ++out.without_candidates;
    const auto gold_it = std::find(cands.begin(), cands.end(), m.gold_entity);
    if (require_gold && gold_it == cands.end()) {
      ++out.skipped;
      continue;
    }
    if (cands.empty()) continue;
    auto [vit, inserted] = vt_cache.try_emplace(m.doc_id);
    if (inserted) vit->second = encode_text(ctx.model, ctx.vocab.word_ids(doc.text));
    CandidateSet set;
    set.gold = static_cast<std::size_t>(gold_it - cands.begin());
    for (const auto& e : cands)
      set.features.push_back(build_feature_vector(ctx, vit->second, m.surface, e, surfaces_by_doc[m.doc_id]));
    out.sets.push_back(std::move(set));
    out.mention_index.push_back(i);
    out.entities.push_back(std::move(cands));
  }
  return out;
}

struct LinkerAccuracy {
  double micro = 0.0;
  double macro = 0.0;
  std::size_t mentions = 0;
  std::size_t documents = 0;
};

/// Micro over mentions, macro as the mean of per-document accuracies.
/// Mentions with no candidates count as errors.
inline LinkerAccuracy evaluate_linker(const MlpModel& mlp, const LinkerContext& ctx, const DocumentIndex& docs,
                                      std::span<const Mention> mentions) {
  if (mentions.empty()) throw std::invalid_argument("evaluate_linker: no mentions");
  const LinkerExamples ex = make_linker_examples(ctx, docs, mentions, false);
  std::vector<bool> correct(mentions.size(), false);
  for (std::size_t k = 0; k < ex.sets.size(); ++k)
    correct[ex.mention_index[k]] = predict(mlp, ex.sets[k].features).index == ex.sets[k].gold;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_doc;
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    auto& [c, n] = per_doc[mentions[i].doc_id];
    c += correct[i];
    ++n;
    total_correct += correct[i];
  }
  LinkerAccuracy acc;
  acc.mentions = mentions.size();
  acc.documents = per_doc.size();
  acc.micro = static_cast<double>(total_correct) / static_cast<double>(mentions.size());
  for (const auto& [doc, cn] : per_doc) acc.macro += static_cast<double>(cn.first) / static_cast<double>(cn.second);
  acc.macro /= static_cast<double>(per_doc.size());
  return acc;
}

struct LinkerTrainResult {
  MlpModel mlp;
  std::size_t skipped = 0;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
};

/// Trains the disambiguator on frozen representations. Epochs are ranked by
/// micro accuracy on `dev` when given, on the training mentions otherwise.
inline LinkerTrainResult train_linker(const LinkerContext& ctx, const DocumentIndex& docs,
                                      std::span<const Mention> train_mentions, const MlpConfig& cfg, Rng& rng,
                                      std::span<const Mention> dev = {}) {
  const LinkerExamples ex = make_linker_examples(ctx, docs, train_mentions, true);
  if (ex.sets.empty()) throw std::runtime_error("train_linker: no training mention has its gold entity among the candidates");
  MlpModel init = make_mlp(ctx.feature_dim(), cfg.hidden_units, rng);
  std::function<double(const MlpModel&)> score;
  if (!dev.empty()) score = [&](const MlpModel& m) { return evaluate_linker(m, ctx, docs, dev).micro; };
  auto res = train_mlp(std::move(init), ex.sets, cfg, rng, score);
  return {std::move(res.model), ex.skipped, res.best_epoch, res.best_score};
}

}  // namespace ntee
