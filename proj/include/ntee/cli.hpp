// Subcommand front end over the whole pipeline. `run` is the program entry
// point; it takes explicit streams so it can be driven in-process.
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntee/corpus.hpp"
#include "ntee/gradcheck.hpp"
#include "ntee/linker.hpp"
#include "ntee/mlp.hpp"
#include "ntee/model.hpp"
#include "ntee/model_io.hpp"
#include "ntee/qa.hpp"
#include "ntee/similarity.hpp"
#include "ntee/skipgram.hpp"
#include "ntee/training_pairs.hpp"
#include "ntee/vocab.hpp"

namespace ntee::cli {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt(double x, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, x);
  return buf;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? (std::ios::binary | std::ios::trunc) : std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

inline std::vector<AnnotatedDocument> read_corpus(const std::string& path) {
  auto in = open_in(path);
  auto docs = load_corpus(in);
  add_pseudo_annotations(docs);
  return docs;
}

inline Vocabulary read_vocab(const std::string& path) {
  auto in = open_in(path);
  return load_vocab(in);
}

struct Global {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Rng streams per command, so commands sharing a seed stay independent.
enum Stream : std::uint64_t { kPretrain = 1, kTrain, kTrainEl, kBuildQa, kTrainQa };

struct OptimizerFlags {
  double lr = 0.01, decay = 0.9, epsilon = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "RMSprop learning rate")->capture_default_str();
    app->add_option("--decay", decay, "RMSprop decay")->capture_default_str();
    app->add_option("--epsilon", epsilon, "RMSprop epsilon")->capture_default_str();
  }
  RmspropConfig config() const { return {lr, decay, epsilon}; }
};

struct MlpFlags {
  std::size_t hidden = 100;
  double dropout = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  OptimizerFlags opt;

  void add(CLI::App* app) {
    app->add_option("--hidden", hidden, "Hidden units")->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout probability")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    opt.add(app);
  }
  MlpConfig config(std::uint64_t seed) const { return {hidden, dropout, epochs, batch_size, opt.config(), seed}; }
};

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint text and entity representation toolkit", "ntee"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file");
  Global g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (skip-gram only; >1 is non-deterministic)")
      ->capture_default_str();

  std::function<void()> action;
  auto log = [&](const std::string& line) { err << "[ntee] " << line << '\n'; };

  // build-vocab
  struct {
    std::string corpus, out;
    std::uint64_t min_word = 5, min_entity = 3;
  } bv;
  auto* c_bv = app.add_subcommand("build-vocab", "Build word and entity vocabularies from a corpus");
  c_bv->add_option("--corpus", bv.corpus, "Corpus file (JSON lines)")->required();
  c_bv->add_option("--out", bv.out, "Vocabulary output (TSV)")->required();
  c_bv->add_option("--min-word-count", bv.min_word)->capture_default_str();
  c_bv->add_option("--min-entity-count", bv.min_entity)->capture_default_str();
  c_bv->callback([&] {
    action = [&] {
      const auto docs = read_corpus(bv.corpus);
      const auto vocab = build_vocab(docs, {bv.min_word, bv.min_entity});
      auto o = open_out(bv.out);
      save_vocab(o, vocab);
      out << "words=" << vocab.num_words() << " entities=" << vocab.num_entities() << '\n';
    };
  });

  // pretrain
  struct {
    std::string corpus, vocab, out, text_out;
    SkipgramConfig cfg;
  } pt;
  auto* c_pt = app.add_subcommand("pretrain", "Skip-gram pre-training over the entity-replaced corpus");
  c_pt->add_option("--corpus", pt.corpus)->required();
  c_pt->add_option("--vocab", pt.vocab)->required();
  c_pt->add_option("--out", pt.out, "Binary embedding output")->required();
  c_pt->add_option("--text-out", pt.text_out, "Optional text export");
  c_pt->add_option("--window", pt.cfg.window)->capture_default_str();
  c_pt->add_option("--negatives", pt.cfg.negatives)->capture_default_str();
  c_pt->add_option("--dim", pt.cfg.dim)->capture_default_str();
  c_pt->add_option("--epochs", pt.cfg.epochs)->capture_default_str();
  c_pt->add_option("--lr", pt.cfg.learning_rate)->capture_default_str();
  c_pt->add_option("--subsample", pt.cfg.subsample_threshold)->capture_default_str();
  c_pt->callback([&] {
    action = [&] {
      const auto docs = read_corpus(pt.corpus);
      const auto vocab = read_vocab(pt.vocab);
      pt.cfg.threads = g.threads;
      Rng rng(g.seed, kPretrain);
      const auto stream = entity_replaced_stream(docs, vocab);
      auto table = train_skipgram(stream, vocab.size(), pt.cfg, rng);
      normalize_entity_rows(table, vocab);
      auto o = open_out(pt.out, true);
      save_embeddings(o, table);
      if (!pt.text_out.empty()) {
        auto t = open_out(pt.text_out);
        export_embeddings_text(t, table, vocab);
      }
      out << "rows=" << table.input.rows() << " dim=" << table.input.cols() << '\n';
    };
  });

  // train
  struct {
    std::string corpus, vocab, embeddings, out, granularity = "sentence";
    NteeTrainConfig cfg;
    OptimizerFlags opt;
  } tr;
  auto* c_tr = app.add_subcommand("train", "Train the text-entity model");
  c_tr->add_option("--corpus", tr.corpus)->required();
  c_tr->add_option("--vocab", tr.vocab)->required();
  c_tr->add_option("--embeddings", tr.embeddings, "Pre-trained embeddings (random init when absent)");
  c_tr->add_option("--out", tr.out)->required();
  auto* dim_opt = c_tr->add_option("--dim", tr.cfg.dim)->capture_default_str();
  c_tr->add_option("--negatives", tr.cfg.negatives)->capture_default_str();
  c_tr->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  c_tr->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  c_tr->add_option("--granularity", tr.granularity)
      ->check(CLI::IsMember({"sentence", "paragraph"}))
      ->capture_default_str();
  c_tr->add_flag("--fixed", tr.cfg.fixed_embeddings, "Keep word and entity tables fixed");
  tr.opt.add(c_tr);
  c_tr->callback([&] {
    action = [&] {
      tr.cfg.granularity = parse_granularity(tr.granularity);
      tr.cfg.seed = g.seed;
      tr.cfg.optimizer = tr.opt.config();
      const auto docs = read_corpus(tr.corpus);
      const auto vocab = read_vocab(tr.vocab);
      Rng rng(g.seed, kTrain);
      NteeModel model;
      if (!tr.embeddings.empty()) {
        auto in = open_in(tr.embeddings, true);
        const auto table = load_embeddings(in);
        if (dim_opt->count() > 0 && table.input.cols() != tr.cfg.dim)
          throw DataError("--dim does not match the pre-trained embedding dimension");
        model = make_pretrained_model(table, vocab, rng);
      } else {
        model = make_random_model(vocab.num_words(), vocab.num_entities(), tr.cfg.dim, rng);
      }
      const auto pairs = make_training_pairs(docs, tr.cfg.granularity, vocab);
      if (pairs.empty()) throw DataError("no training pairs survive vocabulary filtering");
      double last_loss = 0.0;
      model = train(std::move(model), pairs, tr.cfg, rng, [&](const EpochReport& r) {
        last_loss = r.loss;
        log("epoch=" + std::to_string(r.epoch) + " loss=" + fmt(r.loss) + " targets=" + std::to_string(r.targets));
      });
      save_model(tr.out, model, vocab);
      out << "pairs=" << pairs.size() << " params=" << param_count(model) << " last_epoch_loss=" << fmt(last_loss)
          << '\n';
    };
  });

  // eval-sts
  struct {
    std::string model, pairs, dump;
  } es;
  auto* c_es = app.add_subcommand("eval-sts", "Correlate cosine scores with gold similarity ratings");
  c_es->add_option("--model", es.model)->required();
  c_es->add_option("--pairs", es.pairs, "TSV: sentence_a, sentence_b, gold")->required();
  c_es->add_option("--dump", es.dump, "Write per-pair scores to this file");
  c_es->callback([&] {
    action = [&] {
      const auto bundle = load_model(es.model);
      auto in = open_in(es.pairs);
      const auto pairs = load_sts_pairs(in);
      const auto report = evaluate_sts(bundle.model, bundle.vocab, pairs);
      if (!es.dump.empty()) {
        auto o = open_out(es.dump);
        for (std::size_t i = 0; i < pairs.size(); ++i)
          o << fmt(report.scores[i], 9) << '\t' << fmt(pairs[i].gold, 6) << '\n';
      }
      out << "pearson=" << fmt(report.pearson_r) << " spearman=" << fmt(report.spearman_p) << " n=" << report.n
          << '\n';
    };
  });

  // neighbors
  struct {
    std::string model, query, kind = "word";
    std::size_t top = 5;
  } nn;
  auto* c_nn = app.add_subcommand("neighbors", "Most similar words or entities by cosine");
  c_nn->add_option("--model", nn.model)->required();
  c_nn->add_option("--query", nn.query)->required();
  c_nn->add_option("--kind", nn.kind)->check(CLI::IsMember({"word", "entity"}))->capture_default_str();
  c_nn->add_option("--top", nn.top)->capture_default_str();
  c_nn->callback([&] {
    action = [&] {
      const auto bundle = load_model(nn.model);
      const auto kind = nn.kind == "word" ? ItemKind::word : ItemKind::entity;
      std::size_t rank = 0;
      for (const auto& n : nearest_neighbors(bundle.model, bundle.vocab, kind, nn.query, nn.top))
        out << ++rank << '\t' << n.item << '\t' << fmt(n.similarity) << '\n';
    };
  });

  // build-dict
  struct {
    std::string corpus, kb, redirects, out;
    std::size_t max_candidates = 100;
  } bd;
  auto* c_bd = app.add_subcommand("build-dict", "Build the mention dictionary for candidate generation");
  c_bd->add_option("--corpus", bd.corpus)->required();
  c_bd->add_option("--kb", bd.kb, "Entity titles, one per line (default: entities seen in the corpus)");
  c_bd->add_option("--redirects", bd.redirects, "TSV: alias, target entity");
  c_bd->add_option("--max-candidates", bd.max_candidates)->capture_default_str();
  c_bd->add_option("--out", bd.out)->required();
  c_bd->callback([&] {
    action = [&] {
      const auto docs = read_corpus(bd.corpus);
      const auto stats = collect_anchor_stats(docs);
      std::vector<std::string> titles;
      if (!bd.kb.empty()) {
        auto in = open_in(bd.kb);
        for (std::string line; std::getline(in, line);)
          if (!line.empty()) titles.push_back(line);
      } else {
        titles = corpus_entities(docs);
      }
      std::map<std::string, std::string> redirects;
      if (!bd.redirects.empty()) {
        auto in = open_in(bd.redirects);
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
          ++line_no;
          if (line.empty()) continue;
          const auto tab = line.find('\t');
          if (tab == std::string::npos) throw DataError("redirects line " + std::to_string(line_no) + ": expected 2 fields");
          redirects[line.substr(0, tab)] = line.substr(tab + 1);
        }
      }
      const auto dict = build_mention_dictionary(titles, redirects, stats, bd.max_candidates);
      auto o = open_out(bd.out);
      save_dictionary(o, dict);
      out << "surfaces=" << dict.entries.size() << " entities=" << dict.titles.size() << '\n';
    };
  });

  auto read_mentions = [](const std::string& path) {
    auto in = open_in(path);
    return load_mentions(in);
  };
  auto read_dict = [](const std::string& path) {
    auto in = open_in(path);
    return load_dictionary(in);
  };

  // train-el
  struct {
    std::string model, corpus, mentions, dev, dict, strsim = "on", out;
    MlpFlags mlp;
  } te;
  auto* c_te = app.add_subcommand("train-el", "Train the entity-linking disambiguator");
  c_te->add_option("--model", te.model, "Trained text-entity model")->required();
  c_te->add_option("--corpus", te.corpus, "Documents referenced by the mentions; also the anchor statistics")
      ->required();
  c_te->add_option("--mentions", te.mentions)->required();
  c_te->add_option("--dev-mentions", te.dev, "Development mentions for best-epoch selection");
  c_te->add_option("--dict", te.dict)->required();
  c_te->add_option("--strsim", te.strsim)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  c_te->add_option("--out", te.out, "Model file with the disambiguator appended")->required();
  te.mlp.add(c_te);
  c_te->callback([&] {
    action = [&] {
      const auto bundle = load_model(te.model);
      const auto docs = read_corpus(te.corpus);
      const auto stats = collect_anchor_stats(docs);
      const auto dict = read_dict(te.dict);
      const auto mentions = read_mentions(te.mentions);
      std::vector<Mention> dev;
      if (!te.dev.empty()) dev = read_mentions(te.dev);
      const LinkerContext ctx{bundle.model, bundle.vocab, dict, stats, te.strsim == "on"};
      Rng rng(g.seed, kTrainEl);
      const auto res = train_linker(ctx, index_documents(docs), mentions, te.mlp.config(g.seed), rng, dev);
      if (res.skipped > 0) log("skipped " + std::to_string(res.skipped) + " mentions whose gold entity is not a candidate");
      save_model(te.out, bundle.model, bundle.vocab, &res.mlp);
      out << "best_epoch=" << res.best_epoch << " selection_micro=" << fmt(res.best_score)
          << " skipped=" << res.skipped << '\n';
    };
  });

  // eval-el
  struct {
    std::string model, corpus, mentions, dict;
  } ee;
  auto* c_ee = app.add_subcommand("eval-el", "Micro and macro accuracy of entity linking");
  c_ee->add_option("--model", ee.model, "Model file produced by train-el")->required();
  c_ee->add_option("--corpus", ee.corpus)->required();
  c_ee->add_option("--mentions", ee.mentions)->required();
  c_ee->add_option("--dict", ee.dict)->required();
  c_ee->callback([&] {
    action = [&] {
      const auto bundle = load_model(ee.model);
      if (!bundle.mlp) throw DataError("model file has no disambiguator section; run train-el first");
      const auto docs = read_corpus(ee.corpus);
      const auto stats = collect_anchor_stats(docs);
      const auto dict = read_dict(ee.dict);
      const auto mentions = read_mentions(ee.mentions);
      const std::size_t base = 2 * bundle.model.dim() + 4;
      if (bundle.mlp->feature_dim() != base && bundle.mlp->feature_dim() != base + 4)
        throw DataError("disambiguator feature size does not match the model dimension");
      const LinkerContext ctx{bundle.model, bundle.vocab, dict, stats, bundle.mlp->feature_dim() == base + 4};
      const auto acc = evaluate_linker(*bundle.mlp, ctx, index_documents(docs), mentions);
      out << "micro=" << fmt(acc.micro) << " macro=" << fmt(acc.macro) << " mentions=" << acc.mentions
          << " documents=" << acc.documents << '\n';
    };
  });

  // build-qa
  struct {
    std::string questions, out;
    std::size_t min_count = 6;
  } bq;
  auto* c_bq = app.add_subcommand("build-qa", "Filter answers and split questions 60/20/20");
  c_bq->add_option("--questions", bq.questions, "JSON lines {question, answer}")->required();
  c_bq->add_option("--min-count", bq.min_count)->capture_default_str();
  c_bq->add_option("--out", bq.out, "JSON lines {question, answer, split}")->required();
  c_bq->callback([&] {
    action = [&] {
      auto in = open_in(bq.questions);
      const auto examples = load_qa_examples(in);
      Rng rng(g.seed, kBuildQa);
      const auto ds = build_qa_dataset(examples, bq.min_count, rng);
      auto o = open_out(bq.out);
      save_qa_dataset(o, ds);
      out << "answers=" << ds.answers.size() << " train=" << ds.train.size() << " dev=" << ds.dev.size()
          << " test=" << ds.test.size() << '\n';
    };
  });

  // Dataset either prebuilt, or built inline from raw questions.
  struct QaSource {
    std::string dataset, questions;
    std::size_t min_count = 6;
  };
  auto add_qa_source = [](CLI::App* c, QaSource& s) {
    c->add_option("--dataset", s.dataset, "Dataset produced by build-qa");
    c->add_option("--questions", s.questions, "Raw questions; split with --min-count and --seed");
    c->add_option("--min-count", s.min_count)->capture_default_str();
  };
  auto load_source = [&](const QaSource& s) {
    if (!s.dataset.empty()) {
      auto in = open_in(s.dataset);
      return load_qa_dataset(in);
    }
    if (s.questions.empty()) throw DataError("one of --dataset or --questions is required");
    auto in = open_in(s.questions);
    const auto examples = load_qa_examples(in);
    Rng rng(g.seed, kBuildQa);
    return build_qa_dataset(examples, s.min_count, rng);
  };

  // train-qa
  struct {
    QaSource src;
    std::string model, out;
    bool frozen = false;
    MlpFlags mlp;
  } tq;
  auto* c_tq = app.add_subcommand("train-qa", "Train the QA classifier with full fine-tuning");
  c_tq->add_option("--model", tq.model)->required();
  c_tq->add_option("--out", tq.out)->required();
  add_qa_source(c_tq, tq.src);
  c_tq->add_flag("--frozen", tq.frozen, "Do not update the text-entity model");
  tq.mlp.add(c_tq);
  c_tq->callback([&] {
    action = [&] {
      const auto bundle = load_model(tq.model);
      const auto ds = load_source(tq.src);
      Rng rng(g.seed, kTrainQa);
      const auto res = train_qa(bundle.model, bundle.vocab, tq.mlp.config(g.seed), ds, rng, !tq.frozen,
                                [&](std::size_t epoch, double acc) {
                                  log("epoch=" + std::to_string(epoch) + " selection_accuracy=" + fmt(acc));
                                });
      save_model(tq.out, res.model, bundle.vocab, &res.mlp);
      out << "best_epoch=" << res.best_epoch << " selection_accuracy=" << fmt(res.best_score)
          << " answers=" << ds.answers.size() << '\n';
    };
  });

  // eval-qa
  struct {
    QaSource src;
    std::string model, split = "test";
  } eq;
  auto* c_eq = app.add_subcommand("eval-qa", "Top-1 accuracy over the answer set");
  c_eq->add_option("--model", eq.model, "Model file produced by train-qa")->required();
  add_qa_source(c_eq, eq.src);
  c_eq->add_option("--split", eq.split)->check(CLI::IsMember({"train", "dev", "test"}))->capture_default_str();
  c_eq->callback([&] {
    action = [&] {
      const auto bundle = load_model(eq.model);
      if (!bundle.mlp) throw DataError("model file has no classifier section; run train-qa first");
      if (bundle.mlp->feature_dim() != 2 * bundle.model.dim() + 1)
        throw DataError("classifier feature size does not match a QA classifier");
      const auto ds = load_source(eq.src);
      const auto& split = split_of(ds, eq.split);
      const double acc = evaluate_qa(*bundle.mlp, bundle.model, bundle.vocab, ds.answers, split);
      out << "accuracy=" << fmt(acc) << " n=" << split.size() << '\n';
    };
  });

  // gradcheck
  double h = 1e-5, tolerance = 1e-4;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare every analytic gradient with central differences");
  c_gc->add_option("--step", h)->capture_default_str();
  c_gc->add_option("--tolerance", tolerance)->capture_default_str();
  c_gc->callback([&] {
    action = [&] {
      bool ok = true;
      for (const auto& e : gradcheck_all(g.seed, h)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", e.max_relative_error);
        out << "group=" << e.group << " max_rel_error=" << buf << " coords=" << e.coordinates << '\n';
        ok = ok && e.max_relative_error <= tolerance;
      }
      if (!ok) throw DataError("gradient check exceeded tolerance");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  // Resolved configuration: globals plus the selected command's options.
  const std::string prefix = app.get_subcommands().front()->get_name() + ".";
  std::istringstream resolved(app.config_to_str(true, false));
  for (std::string line; std::getline(resolved, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const bool global = line.find('.') == std::string::npos || line.find('.') > eq;
    if (global || line.starts_with(prefix)) log("config " + line);
  }
  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ntee::cli
