// Skip-gram with negative sampling over an entity-replaced token stream.
// Rows 0..|words|-1 of the tables are words, the rest are entities.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ntee/binary_io.hpp"
#include "ntee/corpus.hpp"
#include "ntee/numerics.hpp"
#include "ntee/text.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

struct SkipgramConfig {
  std::size_t window = 10;
  std::size_t negatives = 5;
  std::size_t dim = 300;
  std::size_t epochs = 5;
  double learning_rate = 0.025;  // decays linearly to learning_rate * 1e-4
  double subsample_threshold = 0.0;  // 0 disables
  std::size_t threads = 1;  // >1: lock-free updates, non-deterministic

  void validate() const {
    if (window < 1) throw std::invalid_argument("skipgram: window must be >= 1");
    if (negatives < 1) throw std::invalid_argument("skipgram: negatives must be >= 1");
    if (dim < 1) throw std::invalid_argument("skipgram: dim must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("skipgram: learning rate must be positive");
  }
};

struct EmbeddingTable {
  Mat input;   // |V| x d, becomes the pre-trained vectors
  Mat output;  // |V| x d, context vectors

  bool operator==(const EmbeddingTable&) const = default;
};

using TokenStream = std::vector<std::vector<std::int32_t>>;

inline std::int32_t entity_row(const Vocabulary& vocab, std::int32_t entity_id) {
  return static_cast<std::int32_t>(vocab.num_words()) + entity_id;
}

/// Each real annotation span collapses to its entity's row id; every other
/// token maps to its word id. Out-of-vocabulary items are dropped.
inline std::vector<std::int32_t> entity_replaced_tokens(const AnnotatedDocument& doc, const Vocabulary& vocab) {
  const auto tokens = tokenize_spans(decode_utf8(doc.text));
  std::vector<const Annotation*> anns;
  for (const auto& a : doc.annotations)
    if (!a.pseudo) anns.push_back(&a);

  std::vector<std::int32_t> out;
  auto emit_entity = [&](const Annotation& a) {
    if (auto id = vocab.lookup_entity(a.entity)) out.push_back(entity_row(vocab, *id));
  };
  std::size_t next = 0;
  for (const auto& tok : tokens) {
    while (next < anns.size() && anns[next]->end <= tok.start) emit_entity(*anns[next++]);
    if (next < anns.size() && tok.end > anns[next]->start) continue;  // covered by an annotation
    if (auto id = vocab.lookup_word(tok.text)) out.push_back(*id);
  }
  while (next < anns.size()) emit_entity(*anns[next++]);
  return out;
}

inline TokenStream entity_replaced_stream(std::span<const AnnotatedDocument> docs, const Vocabulary& vocab) {
  TokenStream stream;
  stream.reserve(docs.size());
  for (const auto& doc : docs) stream.push_back(entity_replaced_tokens(doc, vocab));
  return stream;
}

/// (center, context) positions within `window` of each other, in scan order.
inline std::vector<std::pair<std::int32_t, std::int32_t>> skipgram_pairs(std::span<const std::int32_t> seq,
                                                                         std::size_t window) {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(seq.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i) pairs.emplace_back(seq[i], seq[j]);
  }
  return pairs;
}

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// -log s(u_ctx . v_c) - sum_n log s(-u_n . v_c)
inline double skipgram_pair_loss(const EmbeddingTable& t, std::int32_t center, std::int32_t context,
                                 std::span<const std::int32_t> negatives) {
  const auto v = t.input.row(center);
  double loss = -log_sigmoid(dot(t.output.row(context), v));
  for (auto n : negatives) loss -= log_sigmoid(-dot(t.output.row(n), v));
  return loss;
}

struct SkipgramPairGradient {
  Vec center;                  // d loss / d input[center]
  Vec context;                 // d loss / d output[context]
  std::vector<Vec> negatives;  // d loss / d output[negatives[i]]
};

inline SkipgramPairGradient skipgram_pair_gradient(const EmbeddingTable& t, std::int32_t center,
                                                   std::int32_t context, std::span<const std::int32_t> negatives) {
  const auto v = t.input.row(center);
  const std::size_t d = v.size();
  SkipgramPairGradient g{Vec(d, 0.0), Vec(d, 0.0), {}};
  const auto u = t.output.row(context);
  const double gp = sigmoid(dot(u, v)) - 1.0;
  axpy(gp, u, g.center);
  axpy(gp, v, g.context);
  for (auto n : negatives) {
    const auto un = t.output.row(n);
    const double gn = sigmoid(dot(un, v));
    axpy(gn, un, g.center);
    Vec gu(d, 0.0);
    axpy(gn, v, gu);
    g.negatives.push_back(std::move(gu));
  }
  return g;
}

/// Sampler over the unigram distribution raised to the 3/4 power.
class UnigramSampler {
 public:
  explicit UnigramSampler(std::span<const std::uint64_t> counts, double power = 0.75) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (auto c : counts) cumulative_.push_back(total += std::pow(static_cast<double>(c), power));
    if (total <= 0.0) throw std::invalid_argument("UnigramSampler: all counts are zero");
  }

  std::int32_t sample(Rng& rng) const {
    const double x = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    if (it == cumulative_.end()) --it;
    return static_cast<std::int32_t>(it - cumulative_.begin());
  }

  /// Normalized probability of one id.
  double probability(std::size_t id) const {
    const double prev = id == 0 ? 0.0 : cumulative_[id - 1];
    return (cumulative_[id] - prev) / cumulative_.back();
  }

 private:
  std::vector<double> cumulative_;
};

namespace detail {

// Updates for one (center, context) pair; `Access` decides plain vs atomic memory ops.
template <class Load, class Add>
void skipgram_step(Mat& input, Mat& output, std::int32_t center, std::int32_t context, const UnigramSampler& sampler,
                   std::size_t k, double lr, Rng& rng, Vec& v, Vec& u, Vec& dv, Load load, Add add) {
  const std::size_t d = input.cols();
  for (std::size_t i = 0; i < d; ++i) v[i] = load(input(center, i));
  std::fill(dv.begin(), dv.end(), 0.0);
  auto update = [&](std::int32_t target, double label) {
    for (std::size_t i = 0; i < d; ++i) u[i] = load(output(target, i));
    const double g = sigmoid(dot(u, v)) - label;
    for (std::size_t i = 0; i < d; ++i) {
      dv[i] += g * u[i];
      add(output(target, i), -lr * g * v[i]);
    }
  };
  update(context, 1.0);
  for (std::size_t n = 0; n < k; ++n) {
    const std::int32_t neg = sampler.sample(rng);
    if (neg == context) continue;
    update(neg, 0.0);
  }
  for (std::size_t i = 0; i < d; ++i) add(input(center, i), -lr * dv[i]);
}

}  // namespace detail

/// Trains input/output tables for a stream over `vocab_size` row ids.
/// Single-threaded runs are bit-reproducible from the generator state.
inline EmbeddingTable train_skipgram(const TokenStream& stream, std::size_t vocab_size, const SkipgramConfig& cfg,
                                     Rng& rng) {
  cfg.validate();
  std::vector<std::uint64_t> counts(vocab_size, 0);
  std::uint64_t total = 0;
  for (const auto& seq : stream)
    for (auto id : seq) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
        throw std::out_of_range("train_skipgram: token id outside vocabulary");
      ++counts[id];
      ++total;
    }
  if (total == 0) throw std::invalid_argument("train_skipgram: empty stream");

  const std::size_t d = cfg.dim;
  EmbeddingTable table{Mat(vocab_size, d), Mat(vocab_size, d, 0.0)};
  for (double& x : table.input.values()) x = rng.uniform(-0.5, 0.5) / static_cast<double>(d);
  const UnigramSampler sampler(counts);

  const double budget = static_cast<double>(cfg.epochs * total);
  auto keep = [&](std::int32_t id, Rng& r) {
    if (cfg.subsample_threshold <= 0.0) return true;
    const double f = static_cast<double>(counts[id]) / static_cast<double>(total);
    const double t = cfg.subsample_threshold;
    const double p = (std::sqrt(f / t) + 1.0) * t / f;
    return r.uniform() < p;
  };
  auto rate = [&](double processed) { return cfg.learning_rate * std::max(1.0 - processed / budget, 1e-4); };

  if (cfg.threads <= 1) {
    Vec v(d), u(d), dv(d);
    auto load = [](double& x) { return x; };
    auto add = [](double& x, double delta) { x += delta; };
    std::uint64_t processed = 0;
    std::vector<std::int32_t> kept;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (const auto& seq : stream) {
        kept.clear();
        for (auto id : seq)
          if (keep(id, rng)) kept.push_back(id);
        const double lr = rate(static_cast<double>(processed));
        for (const auto& [c, ctx] : skipgram_pairs(kept, cfg.window))
          detail::skipgram_step(table.input, table.output, c, ctx, sampler, cfg.negatives, lr, rng, v, u, dv, load,
                                add);
        processed += seq.size();
      }
    }
    return table;
  }

  // Hogwild: workers share the tables through relaxed atomics.
  std::atomic<std::uint64_t> processed{0};
  auto worker = [&](std::size_t w) {
    Rng local = rng.split(w + 1);
    Vec v(d), u(d), dv(d);
    auto load = [](double& x) { return std::atomic_ref<double>(x).load(std::memory_order_relaxed); };
    auto add = [](double& x, double delta) { std::atomic_ref<double>(x).fetch_add(delta, std::memory_order_relaxed); };
    std::vector<std::int32_t> kept;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t s = w; s < stream.size(); s += cfg.threads) {
        kept.clear();
        for (auto id : stream[s])
          if (keep(id, local)) kept.push_back(id);
        const double lr = rate(static_cast<double>(processed.load(std::memory_order_relaxed)));
        for (const auto& [c, ctx] : skipgram_pairs(kept, cfg.window))
          detail::skipgram_step(table.input, table.output, c, ctx, sampler, cfg.negatives, lr, local, v, u, dv, load,
                                add);
        processed.fetch_add(stream[s].size(), std::memory_order_relaxed);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < cfg.threads; ++w) pool.emplace_back(worker, w);
  for (auto& t : pool) t.join();
  return table;
}

/// Scales entity rows of the input table to unit length; zero rows stay zero.
inline void normalize_entity_rows(EmbeddingTable& table, const Vocabulary& vocab) {
  for (std::size_t e = 0; e < vocab.num_entities(); ++e) {
    auto row = table.input.row(vocab.num_words() + e);
    const double n = norm2(row);
    if (n == 0.0) continue;
    for (double& x : row) x /= n;
  }
}

// Binary layout: "NTSG", u32 version, u64 |V|, u64 d, input rows, output rows.
inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

inline void save_embeddings(std::ostream& out, const EmbeddingTable& t) {
  io::write_magic(out, "NTSG");
  io::write_scalar<std::uint32_t>(out, kEmbeddingFileVersion);
  io::write_scalar<std::uint64_t>(out, t.input.rows());
  io::write_scalar<std::uint64_t>(out, t.input.cols());
  io::write_doubles(out, t.input.values());
  io::write_doubles(out, t.output.values());
}

inline EmbeddingTable load_embeddings(std::istream& in) {
  io::expect_magic(in, "NTSG");
  const auto version = io::read_scalar<std::uint32_t>(in, "version");
  if (version != kEmbeddingFileVersion)
    throw io::FormatError("unsupported embedding file version " + std::to_string(version));
  const auto rows = io::read_scalar<std::uint64_t>(in, "row count");
  const auto cols = io::read_scalar<std::uint64_t>(in, "dimension");
  if (rows > (1ULL << 32) || cols > (1ULL << 20)) throw io::FormatError("implausible embedding dimensions");
  EmbeddingTable t{Mat(rows, cols), Mat(rows, cols)};
  io::read_doubles(in, t.input.values(), "input vectors");
  io::read_doubles(in, t.output.values(), "output vectors");
  return t;
}

inline std::string entity_token_surface(const std::string& title) {
  std::string s = "ENTITY/" + title;
  std::replace(s.begin(), s.end(), ' ', '_');
  return s;
}

/// One line per type: surface followed by the d input-vector components.
inline void export_embeddings_text(std::ostream& out, const EmbeddingTable& t, const Vocabulary& vocab) {
  out << std::setprecision(17);
  for (std::size_t r = 0; r < t.input.rows(); ++r) {
    out << (r < vocab.num_words() ? vocab.word(r) : entity_token_surface(vocab.entity(r - vocab.num_words())));
    for (double x : t.input.row(r)) out << ' ' << x;
    out << '\n';
  }
}

}  // namespace ntee
