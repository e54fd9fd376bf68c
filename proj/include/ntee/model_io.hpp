// Model file: "NTEE", u32 version, u64 |V_word|, u64 |V_entity|, u64 d,
// word_emb, entity_emb, W, b (little-endian f64), u64-length vocabulary text
// block, then an optional "MLP1" section: u64 hidden, u64 feature_dim, W1,
// b1, w2, b2.
#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "ntee/binary_io.hpp"
#include "ntee/mlp.hpp"
#include "ntee/model.hpp"
#include "ntee/vocab.hpp"

namespace ntee {

inline constexpr std::uint32_t kModelFileVersion = 1;

struct ModelBundle {
  NteeModel model;
  Vocabulary vocab;
  std::optional<MlpModel> mlp;
};

inline void save_model(std::ostream& out, const NteeModel& m, const Vocabulary& vocab,
                       const MlpModel* mlp = nullptr) {
  check_model(m);
  if (vocab.num_words() != m.num_words() || vocab.num_entities() != m.num_entities())
    throw std::invalid_argument("save_model: vocabulary does not match model tables");
  io::write_magic(out, "NTEE");
  io::write_scalar<std::uint32_t>(out, kModelFileVersion);
  io::write_scalar<std::uint64_t>(out, m.num_words());
  io::write_scalar<std::uint64_t>(out, m.num_entities());
  io::write_scalar<std::uint64_t>(out, m.dim());
  io::write_doubles(out, m.word_emb.values());
  io::write_doubles(out, m.entity_emb.values());
  io::write_doubles(out, m.W.values());
  io::write_doubles(out, m.b);
  io::write_string(out, vocab_to_string(vocab));
  if (mlp) {
    io::write_magic(out, "MLP1");
    io::write_scalar<std::uint64_t>(out, mlp->hidden());
    io::write_scalar<std::uint64_t>(out, mlp->feature_dim());
    io::write_doubles(out, mlp->W1.values());
    io::write_doubles(out, mlp->b1);
    io::write_doubles(out, mlp->w2);
    io::write_scalar(out, mlp->b2);
  }
}

inline ModelBundle load_model(std::istream& in) {
  io::expect_magic(in, "NTEE");
  const auto version = io::read_scalar<std::uint32_t>(in, "version");
  if (version != kModelFileVersion)
    throw io::FormatError("unsupported model file version " + std::to_string(version) + " (this build reads version " +
                          std::to_string(kModelFileVersion) + ")");
  const auto nw = io::read_scalar<std::uint64_t>(in, "word count");
  const auto ne = io::read_scalar<std::uint64_t>(in, "entity count");
  const auto d = io::read_scalar<std::uint64_t>(in, "dimension");
  if (d == 0 || d > (1u << 16) || nw > (1ULL << 32) || ne > (1ULL << 32) || ne == 0)
    throw io::FormatError("implausible model header");
  ModelBundle b{NteeModel{Mat(nw, d), Mat(ne, d), Mat(d, d), Vec(d)}, {}, std::nullopt};
  io::read_doubles(in, b.model.word_emb.values(), "word embeddings");
  io::read_doubles(in, b.model.entity_emb.values(), "entity embeddings");
  io::read_doubles(in, b.model.W.values(), "W");
  io::read_doubles(in, b.model.b, "b");
  b.vocab = vocab_from_string(io::read_string(in, "vocabulary"));
  if (b.vocab.num_words() != nw || b.vocab.num_entities() != ne)
    throw io::FormatError("vocabulary block does not match model header");

  if (in.peek() == std::char_traits<char>::eof()) return b;
  io::expect_magic(in, "MLP1");
  const auto hidden = io::read_scalar<std::uint64_t>(in, "mlp hidden size");
  const auto fdim = io::read_scalar<std::uint64_t>(in, "mlp feature size");
  if (hidden == 0 || hidden > (1u << 20) || fdim == 0 || fdim > (1u << 20)) throw io::FormatError("implausible MLP header");
  MlpModel mlp{Mat(hidden, fdim), Vec(hidden), Vec(hidden), 0.0};
  io::read_doubles(in, mlp.W1.values(), "mlp W1");
  io::read_doubles(in, mlp.b1, "mlp b1");
  io::read_doubles(in, mlp.w2, "mlp w2");
  mlp.b2 = io::read_scalar<double>(in, "mlp b2");
  if (in.peek() != std::char_traits<char>::eof()) throw io::FormatError("trailing bytes after MLP section");
  b.mlp = std::move(mlp);
  return b;
}

inline void save_model(const std::string& path, const NteeModel& m, const Vocabulary& vocab,
                       const MlpModel* mlp = nullptr) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  save_model(out, m, vocab, mlp);
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return load_model(in);
}

}  // namespace ntee
