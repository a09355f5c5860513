#pragma once

// Graph-structural concept embeddings: second-order biased random walks over
// the undirected IS-A graph, then skip-gram with negative sampling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>
#include <unordered_map>
#include <vector>

#include "medlink/embed_store.hpp"
#include "medlink/error.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/linalg.hpp"
#include "medlink/random.hpp"

namespace medlink {

struct WalkConfig {
  double p = 1.0;  // return parameter
  double q = 1.0;  // in-out parameter
  std::size_t walk_length = 80;
  std::size_t walks_per_node = 10;
  std::uint64_t seed = 42;
  std::size_t workers = 1;

  void validate() const {
    if (!(p > 0.0) || !(q > 0.0)) throw ConfigError("node2vec p and q must be positive");
    if (walk_length < 2) throw ConfigError("walk_length must be >= 2");
    if (walks_per_node < 1) throw ConfigError("walks_per_node must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
  }
};

/// Undirected adjacency over dense node indices, neighbours ascending.
using Adjacency = std::vector<std::vector<std::size_t>>;

inline Adjacency undirected_adjacency(const ConceptGraph& g) {
  Adjacency adj(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) adj[i] = g.undirected_neighbors(i);
  return adj;
}

/// Unnormalised probabilities of stepping from `cur` to each of its
/// neighbours (in adjacency order) after arriving from `prev`:
/// 1/p back to prev, 1 to a common neighbour of prev, 1/q otherwise.
inline std::vector<double> transition_weights(const Adjacency& adj, std::size_t prev, std::size_t cur, double p,
                                              double q) {
  const auto& from = adj[prev];
  std::vector<double> w;
  w.reserve(adj[cur].size());
  for (auto x : adj[cur]) {
    if (x == prev) {
      w.push_back(1.0 / p);
    } else if (std::binary_search(from.begin(), from.end(), x)) {
      w.push_back(1.0);
    } else {
      w.push_back(1.0 / q);
    }
  }
  return w;
}

/// Walker's alias table for O(1) sampling from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) : prob_(weights.size()), alias_(weights.size(), 0) {
    const auto n = weights.size();
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0;
    for (auto i : small) prob_[i] = 1.0;
  }

  std::size_t size() const noexcept { return prob_.size(); }

  std::size_t sample(Rng& rng) const {
    const auto i = static_cast<std::size_t>(rng.below(prob_.size()));
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

/// Second-order transition sampler. Alias tables are built on first use of
/// each (prev, cur) context and kept for the sampler's lifetime; memory grows
/// with the number of distinct directed edges actually traversed.
class TransitionSampler {
 public:
  TransitionSampler(const Adjacency& adj, double p, double q) : adj_(adj), p_(p), q_(q) {}

  /// Next node after stepping prev -> cur. cur must have a neighbour.
  std::size_t next(std::size_t prev, std::size_t cur, Rng& rng) {
    const auto key = static_cast<std::uint64_t>(prev) * adj_.size() + cur;
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, AliasTable(transition_weights(adj_, prev, cur, p_, q_))).first;
    return adj_[cur][it->second.sample(rng)];
  }

  std::size_t first(std::size_t start, Rng& rng) const {
    const auto& nb = adj_[start];
    return nb[static_cast<std::size_t>(rng.below(nb.size()))];
  }

  std::size_t cached_contexts() const noexcept { return cache_.size(); }

 private:
  const Adjacency& adj_;
  double p_, q_;
  std::unordered_map<std::uint64_t, AliasTable> cache_;
};

namespace detail {

inline std::vector<std::size_t> walk_from(TransitionSampler& sampler, const Adjacency& adj, std::size_t start,
                                          std::size_t length, Rng& rng) {
  std::vector<std::size_t> walk{start};
  if (adj[start].empty()) return walk;
  walk.push_back(sampler.first(start, rng));
  while (walk.size() < length) walk.push_back(sampler.next(walk[walk.size() - 2], walk.back(), rng));
  return walk;
}

}  // namespace detail

/// walks_per_node walks from every node. Each walk draws from its own stream
/// seeded by (seed, round, node), so the output is identical for any worker
/// count. Within a round, start nodes are visited in a seeded shuffled order.
inline std::vector<std::vector<Sctid>> generate_walks(const ConceptGraph& g, const WalkConfig& cfg) {
  cfg.validate();
  if (g.empty()) return {};
  const auto adj = undirected_adjacency(g);
  const auto n = g.size();

  struct Job {
    std::size_t round, node;
  };
  std::vector<Job> jobs;
  jobs.reserve(n * cfg.walks_per_node);
  for (std::size_t r = 0; r < cfg.walks_per_node; ++r) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng round_rng(derive_seed(cfg.seed, 0x6f72646572ULL, r));
    round_rng.shuffle(std::span(order));
    for (auto node : order) jobs.push_back({r, node});
  }

  std::vector<std::vector<Sctid>> walks(jobs.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    TransitionSampler sampler(adj, cfg.p, cfg.q);
    for (std::size_t j = begin; j < end; ++j) {
      Rng rng(derive_seed(cfg.seed, jobs[j].round, jobs[j].node));
      const auto walk = detail::walk_from(sampler, adj, jobs[j].node, cfg.walk_length, rng);
      auto& out = walks[j];
      out.reserve(walk.size());
      for (auto idx : walk) out.push_back(g.concepts()[idx].sctid);
    }
  };
  const auto workers = std::min(cfg.workers, jobs.size());
  if (workers <= 1) {
    run(0, jobs.size());
  } else {
    std::vector<std::jthread> pool;
    const auto chunk = (jobs.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const auto b = std::min(jobs.size(), w * chunk), e = std::min(jobs.size(), (w + 1) * chunk);
      pool.emplace_back(run, b, e);
    }
  }
  return walks;
}

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling
// ---------------------------------------------------------------------------

struct SgnsConfig {
  std::size_t dim = 300;
  std::size_t window = 10;
  std::size_t negatives = 5;
  std::size_t epochs = 1;
  double learning_rate = 0.025;
  std::uint64_t seed = 42;
  std::size_t workers = 1;  // > 1 enables lock-free parallel updates (not reproducible)

  void validate() const {
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (negatives < 1) throw ConfigError("negatives must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  }
};

/// sctid -> vector, ascending sctid order.
class NodeEmbeddings {
 public:
  NodeEmbeddings() = default;
  explicit NodeEmbeddings(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }
  const std::map<Sctid, Vector>& vectors() const noexcept { return vectors_; }

  void set(Sctid id, Vector v) {
    if (v.size() != dim_) throw ValidationError("node embedding dimension mismatch for " + id.str());
    vectors_[id] = std::move(v);
  }

  const Vector* find(Sctid id) const {
    auto it = vectors_.find(id);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  bool operator==(const NodeEmbeddings&) const = default;

  void save(const std::string& path) const {
    WordVectorStore store(dim_);
    for (const auto& [id, v] : vectors_) store.set(id.str(), v);
    store.save(path);
  }

  static NodeEmbeddings load(const std::string& path) {
    const auto store = WordVectorStore::load(path);
    NodeEmbeddings out(store.dim());
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto id = Sctid::parse(store.tokens()[i]);
      if (!id) throw ParseError(path, i + 2, "token '" + store.tokens()[i] + "' is not an sctid");
      auto v = store.at(i);
      out.set(*id, Vector(v.begin(), v.end()));
    }
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::map<Sctid, Vector> vectors_;
};

/// Skip-gram parameters over a dense vocabulary: input vectors (the
/// embeddings) and output vectors used only for scoring context pairs.
class SgnsModel {
 public:
  SgnsModel(std::size_t vocab, std::size_t dim, std::uint64_t seed)
      : vocab_(vocab), dim_(dim), input_(vocab * dim), output_(vocab * dim, 0.0) {
    Rng rng(seed);
    const double half = 0.5 / static_cast<double>(dim);
    for (auto& v : input_) v = rng.uniform(-half, half);
  }

  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> input(std::size_t i) const { return {input_.data() + i * dim_, dim_}; }

  /// -log s(in . pos) - sum log s(-in . neg)
  double pair_loss(std::size_t center, std::size_t context, std::span<const std::size_t> negatives) const {
    auto log_sigmoid = [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); };
    const auto in = input(center);
    double loss = -log_sigmoid(dot(in, out_row(context)));
    for (auto neg : negatives) loss -= log_sigmoid(-dot(in, out_row(neg)));
    return loss;
  }

  /// One SGD step on a (center, context) pair with the given negatives.
  template <bool Shared = false>
  void update(std::size_t center, std::size_t context, std::span<const std::size_t> negatives, double lr,
              std::vector<double>& scratch) {
    scratch.assign(dim_, 0.0);
    double* in = input_.data() + center * dim_;
    auto step = [&](std::size_t target, double label) {
      double* out = output_.data() + target * dim_;
      double f = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) f += load<Shared>(in[k]) * load<Shared>(out[k]);
      const double g = (label - sigmoid(f)) * lr;
      for (std::size_t k = 0; k < dim_; ++k) {
        const double o = load<Shared>(out[k]);
        scratch[k] += g * o;
        store<Shared>(out[k], o + g * load<Shared>(in[k]));
      }
    };
    step(context, 1.0);
    for (auto neg : negatives)
      if (neg != context) step(neg, 0.0);
    for (std::size_t k = 0; k < dim_; ++k) store<Shared>(in[k], load<Shared>(in[k]) + scratch[k]);
  }

 private:
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  // In shared (multi-worker) mode every element access is a relaxed atomic;
  // read-modify-write sequences may interleave, as in Hogwild.
  template <bool Shared>
  static double load(double& x) {
    if constexpr (Shared) return std::atomic_ref<double>(x).load(std::memory_order_relaxed);
    return x;
  }
  template <bool Shared>
  static void store(double& x, double v) {
    if constexpr (Shared) {
      std::atomic_ref<double>(x).store(v, std::memory_order_relaxed);
    } else {
      x = v;
    }
  }

  std::span<const double> out_row(std::size_t i) const { return {output_.data() + i * dim_, dim_}; }

  std::size_t vocab_;
  std::size_t dim_;
  std::vector<double> input_;
  std::vector<double> output_;
};

/// Negative sampler over the unigram distribution raised to 0.75.
class UnigramSampler {
 public:
  explicit UnigramSampler(std::span<const std::size_t> counts) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (auto c : counts) {
      total += std::pow(static_cast<double>(c), 0.75);
      cumulative_.push_back(total);
    }
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

/// Trains node vectors on a walk corpus. With one worker the result depends
/// only on (walks, cfg).
inline NodeEmbeddings train_sgns(const std::vector<std::vector<Sctid>>& walks, const SgnsConfig& cfg) {
  cfg.validate();
  // Vocabulary in ascending sctid order.
  std::map<Sctid, std::size_t> freq;
  std::size_t tokens = 0;
  for (const auto& w : walks)
    for (auto id : w) ++freq[id], ++tokens;
  if (freq.empty()) return NodeEmbeddings(cfg.dim);

  std::vector<Sctid> vocab;
  std::vector<std::size_t> counts;
  std::unordered_map<Sctid, std::size_t> index;
  for (const auto& [id, c] : freq) {
    index.emplace(id, vocab.size());
    vocab.push_back(id);
    counts.push_back(c);
  }
  std::vector<std::vector<std::size_t>> corpus;
  corpus.reserve(walks.size());
  for (const auto& w : walks) {
    std::vector<std::size_t> ids;
    ids.reserve(w.size());
    for (auto id : w) ids.push_back(index.at(id));
    corpus.push_back(std::move(ids));
  }

  SgnsModel model(vocab.size(), cfg.dim, derive_seed(cfg.seed, 0x696e6974ULL));
  const UnigramSampler sampler(counts);
  const double total = static_cast<double>(tokens * cfg.epochs);
  std::atomic<std::size_t> processed{0};

  auto train_range = [&]<bool Shared>(std::size_t begin, std::size_t end, std::uint64_t stream) {
    Rng rng(stream);
    std::vector<double> scratch;
    std::vector<std::size_t> negs(cfg.negatives);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      for (std::size_t wi = begin; wi < end; ++wi) {
        const auto& walk = corpus[wi];
        for (std::size_t i = 0; i < walk.size(); ++i) {
          const double progress = static_cast<double>(processed.fetch_add(1, std::memory_order_relaxed)) / total;
          const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - progress);
          const auto lo = i >= cfg.window ? i - cfg.window : 0;
          const auto hi = std::min(walk.size(), i + cfg.window + 1);
          for (std::size_t j = lo; j < hi; ++j) {
            if (j == i) continue;
            for (auto& n : negs) n = sampler.sample(rng);
            model.update<Shared>(walk[i], walk[j], negs, lr, scratch);
          }
        }
      }
    }
  };

  const auto workers = std::min(cfg.workers, corpus.size());
  if (workers <= 1) {
    train_range.template operator()<false>(0, corpus.size(), derive_seed(cfg.seed, 0x73676e73ULL));
  } else {
    std::vector<std::jthread> pool;
    const auto chunk = (corpus.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const auto b = std::min(corpus.size(), w * chunk), e = std::min(corpus.size(), (w + 1) * chunk);
      pool.emplace_back([&, b, e, w] { train_range.template operator()<true>(b, e, derive_seed(cfg.seed, 0x73676e73ULL, w)); });
    }
  }

  NodeEmbeddings out(cfg.dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto v = model.input(i);
    out.set(vocab[i], Vector(v.begin(), v.end()));
  }
  return out;
}

/// Walks plus SGNS in one call.
inline NodeEmbeddings node2vec(const ConceptGraph& g, const WalkConfig& walk_cfg, const SgnsConfig& sgns_cfg) {
  return train_sgns(generate_walks(g, walk_cfg), sgns_cfg);
}

}  // namespace medlink
