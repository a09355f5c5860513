#pragma once

// Synthetic data for tests: temporary directories, random strings, mention
// corpora, and a small end-to-end fixture (graph, corpus, vectors, stacks).

#include <filesystem>
#include <string>
#include <vector>

#include "medlink/medlink.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "medlink") {
    static std::uint64_t counter = 0;
    const auto stamp = medlink::derive_seed(static_cast<std::uint64_t>(::getpid()), ++counter,
                                            static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
    path_ = fs::temp_directory_path() / (tag + "-" + medlink::hex64(stamp));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string write(const TempDir& dir, const std::string& name, const std::string& content) {
  const auto p = dir.file(name);
  medlink::write_file(p, content);
  return p;
}

/// Random string over a small mixed-script alphabet so that matches and
/// shared substrings occur often.
inline std::u32string random_u32(medlink::Rng& rng, std::size_t max_len) {
  static const std::u32string alphabet = U"abcdeéßαβж中\U0001F600";
  const auto len = static_cast<std::size_t>(rng.below(max_len + 1));
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
  return s;
}

/// `n` mentions over `concepts` concepts (ids 1000..), every concept used at
/// least once when n >= concepts, remaining mentions Zipf-like.
inline std::vector<medlink::Mention> synthetic_corpus(std::size_t n, std::size_t concepts, std::uint64_t seed) {
  medlink::Rng rng(seed);
  std::vector<medlink::Mention> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = i < concepts ? i : static_cast<std::size_t>(rng.below(1 + rng.below(concepts)));
    medlink::Mention m;
    m.id = static_cast<std::int64_t>(i + 1);
    m.general = medlink::Sctid{1000 + c};
    m.specific = medlink::Sctid{1000 + (c + rng.below(2)) % concepts};
    m.term = "term" + std::to_string(c) + (rng.below(3) == 0 ? "x" : "");
    m.example = "we saw " + m.term + " today";
    m.subreddit = "AskDocs";
    out.push_back(std::move(m));
  }
  return out;
}

/// Paths of the end-to-end fixture written by write_pipeline_fixture().
struct PipelineFixture {
  std::string concepts, edges, train, dev, test, corpus, ft_vectors, mention_stacks, label_stacks;
};

/// A small but complete linking problem: 24 concepts in a tree, labels built
/// from a word vocabulary, mentions that are exact labels, typo variants,
/// or synonyms, plus word vectors and per-layer stacks for every mention
/// and label. The train/dev/test files form a stratified split.
inline PipelineFixture write_pipeline_fixture(const TempDir& dir, std::uint64_t seed = 7) {
  using medlink::Sctid;
  medlink::Rng rng(seed);
  const std::vector<std::string> words = {"pain", "head", "back", "chest", "acute", "chronic", "fever", "cough",
                                          "rash", "skin", "leg", "arm", "nausea", "sleep", "loss", "joint"};
  const std::size_t dim = 8, layers = 3, sdim = 6;

  auto word_vec = [&](const std::string& w) {
    medlink::Rng r(medlink::fnv1a64(w));
    std::vector<double> v(dim);
    for (auto& x : v) x = r.normal();
    return v;
  };
  auto text_stack = [&](const std::string& text, std::uint64_t salt) {
    medlink::LayerStack s(layers, sdim);
    medlink::Rng r(medlink::fnv1a64(text) ^ salt);
    for (auto& x : s.data) x = r.normal();
    return s;
  };

  std::vector<medlink::Concept> concepts;
  std::vector<medlink::IsA> edges;
  for (std::size_t i = 0; i < 24; ++i) {
    const Sctid id{100000 + 7 * i};
    const auto& a = words[i % words.size()];
    const auto& b = words[(i * 5 + 3) % words.size()];
    std::vector<std::string> labels{a + " " + b, b + " of " + a};
    if (i % 3 == 0) labels.push_back(a + b);
    concepts.push_back({id, labels, "finding"});
    if (i > 0) edges.push_back({id, Sctid{100000 + 7 * ((i - 1) / 2)}});
  }
  const medlink::ConceptGraph g(concepts, edges);
  medlink::save_graph(g, dir.file("concepts.tsv"), dir.file("edges.tsv"));

  std::vector<medlink::Mention> mentions;
  std::int64_t next_id = 1;
  for (const auto& c : g.concepts()) {
    for (int k = 0; k < 6; ++k) {
      std::string term = c.labels[static_cast<std::size_t>(k) % c.labels.size()];
      if (k == 3 && term.size() > 4) term[2] = 'z';            // typo
      if (k == 4) term = "my " + term;                           // extra token
      if (k == 5) term = c.labels.front() + "s";                 // plural
      medlink::Mention m;
      m.id = next_id++;
      m.term = term;
      m.general = c.sctid;
      m.specific = c.sctid;
      m.example = "I have " + term + " since monday";
      m.subreddit = "AskDocs";
      mentions.push_back(std::move(m));
    }
  }
  rng.shuffle(std::span(mentions));
  const auto split = medlink::make_split(mentions, medlink::Level::General, medlink::SplitKind::Stratified,
                                         medlink::SplitRatios{0.6, 0.2, 0.2}, seed);

  PipelineFixture fx;
  fx.concepts = dir.file("concepts.tsv");
  fx.edges = dir.file("edges.tsv");
  fx.corpus = dir.file("corpus.tsv");
  fx.train = dir.file("train.tsv");
  fx.dev = dir.file("dev.tsv");
  fx.test = dir.file("test.tsv");
  medlink::save_corpus(mentions, fx.corpus);
  medlink::save_corpus(split.train, fx.train);
  medlink::save_corpus(split.dev, fx.dev);
  medlink::save_corpus(split.test, fx.test);

  medlink::WordVectorStore store(dim);
  for (const auto& w : words) store.set(w, word_vec(w));
  store.set("of", word_vec("of"));
  fx.ft_vectors = dir.file("ft.vec");
  store.save(fx.ft_vectors);

  medlink::LayerStackFile mstacks(layers, sdim);
  for (const auto& m : mentions) mstacks.add(std::to_string(m.id), text_stack(m.term, 1));
  fx.mention_stacks = dir.file("mentions.stacks");
  mstacks.save(fx.mention_stacks);

  medlink::LayerStackFile lstacks(layers, sdim);
  for (const auto& c : g.concepts())
    for (std::size_t i = 0; i < c.labels.size(); ++i)
      lstacks.add(medlink::label_stack_key(c.sctid, i), text_stack(c.labels[i], 1));
  fx.label_stacks = dir.file("labels.stacks");
  lstacks.save(fx.label_stacks);
  return fx;
}

}  // namespace fixtures
