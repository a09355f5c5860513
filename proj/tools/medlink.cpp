// medlink command-line front end. Every subcommand writes its outputs plus a
// manifest that doubles as a config file for re-running the same command.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "medlink/medlink.hpp"

namespace fs = std::filesystem;
using namespace medlink;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr std::uint64_t kDefaultSeed = 42;

bool g_quiet = false;

void info(const std::string& msg) {
  if (!g_quiet) std::cerr << "medlink: " << msg << '\n';
}
void warn(const std::string& msg) { std::cerr << "medlink: warning: " << msg << '\n'; }

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  for (auto part : split(text, ','))
    if (!part.empty()) out.emplace_back(part);
  return out;
}

std::string toml_string(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

// Written next to the outputs. The [<command>] section holds every resolved
// option except the output location, so `--config <manifest>` re-runs the
// command. Wall time goes to a separate .timing file to keep the manifest
// byte-stable.
class Manifest {
 public:
  Manifest(const CLI::App& cmd, fs::path path, std::uint64_t seed)
      : cmd_(cmd), path_(std::move(path)), seed_(seed), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& option, const std::string& path) {
    if (!path.empty()) inputs_.emplace_back(option, path, file_checksum(path));
  }

  void output(const fs::path& file) {
    const auto rel = fs::relative(file, path_.parent_path()).generic_string();
    outputs_.emplace_back(rel, file_checksum(file.string()));
  }

  void write() const {
    std::string out = "[" + cmd_.get_name() + "]\n";
    for (const auto* opt : cmd_.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const auto& name = opt->get_lnames().front();
      if (name == "help" || name == "out" || name == "quiet") continue;
      std::string value;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      } else {
        value = opt->get_default_str();
        if (value.empty()) continue;  // unset optional input
      }
      if (opt->get_type_size() == 0) {  // flags
        value = opt->count() > 0 ? "true" : "false";
        out += name + "=" + value + "\n";
      } else {
        out += name + "=" + toml_string(value) + "\n";
      }
    }
    out += "\n[manifest]\n";
    out += "command=" + toml_string(cmd_.get_name()) + "\n";
    out += "version=" + toml_string(kVersion) + "\n";
    out += "seed=" + std::to_string(seed_) + "\n";
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      const auto& [opt, path, sum] = inputs_[i];
      const auto key = "input_" + std::to_string(i + 1);
      out += key + "_option=" + toml_string(opt) + "\n" + key + "_path=" + toml_string(path) + "\n" + key +
             "_fnv1a64=" + toml_string(sum) + "\n";
    }
    for (std::size_t i = 0; i < outputs_.size(); ++i) {
      const auto key = "output_" + std::to_string(i + 1);
      out += key + "_path=" + toml_string(outputs_[i].first) + "\n" + key + "_fnv1a64=" + toml_string(outputs_[i].second) + "\n";
    }
    write_file(path_.string(), out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file(path_.string() + ".timing", "wall_seconds=" + format_double(secs) + "\n");
  }

 private:
  const CLI::App& cmd_;
  fs::path path_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::tuple<std::string, std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

// Manifest location for a command whose --out is a single file.
fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = kDefaultSeed;
  std::size_t workers = 1;
  CLI::Option* seed_opt = nullptr;

  void add(CLI::App& cmd, bool with_seed) {
    if (with_seed) seed_opt = cmd.add_option("--seed", seed, "Random seed (default 42)");
    cmd.add_option("--workers", workers, "Worker threads; 1 guarantees bit-reproducible output")
        ->check(CLI::PositiveNumber);
  }

  void announce_seed() const {
    if (seed_opt && seed_opt->count() == 0) info("no --seed given, using " + std::to_string(kDefaultSeed));
  }
};

struct GraphPaths {
  std::string concepts, edges;

  void add(CLI::App& cmd, bool required) {
    auto* c = cmd.add_option("--concepts", concepts, "Concept table (sctid, labels, semantic tag)")
                  ->check(CLI::ExistingFile);
    auto* e = cmd.add_option("--edges", edges, "IS-A edge table (child, parent)")->check(CLI::ExistingFile);
    if (required) {
      c->required();
      e->required();
    }
  }

  bool given() const { return !concepts.empty() && !edges.empty(); }

  ConceptGraph load(Manifest* m = nullptr) const {
    if (!given()) throw ConfigError("--concepts and --edges are required");
    if (m) {
      m->input("concepts", concepts);
      m->input("edges", edges);
    }
    auto g = load_graph(concepts, edges);
    info("graph: " + std::to_string(g.size()) + " concepts, " + std::to_string(g.edge_count()) + " edges");
    return g;
  }
};

Level level_from(const std::string& s) {
  auto l = parse_level(s);
  if (!l) throw ConfigError("unknown level '" + s + "'");
  return *l;
}

Metric metric_from(const std::string& s) {
  auto m = parse_metric(s);
  if (!m) throw ConfigError("unknown metric '" + s + "'");
  return *m;
}

std::vector<double> grid_from(const std::string& text, Metric metric) {
  if (text.empty()) return default_grid(metric);
  std::vector<double> grid;
  for (const auto& v : split_list(text)) {
    auto d = parse_double(v);
    if (!d) throw ConfigError("invalid grid value '" + v + "'");
    grid.push_back(*d);
  }
  return grid;
}

SplitRatios ratios_from(const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ConfigError("--ratios needs three comma-separated values");
  std::array<double, 3> v{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto d = parse_double(parts[i]);
    if (!d) throw ConfigError("invalid ratio '" + parts[i] + "'");
    v[i] = *d;
  }
  SplitRatios r{v[0], v[1], v[2]};
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// Neural inputs
// ---------------------------------------------------------------------------

struct VectorSources {
  std::optional<WordVectorStore> ft;
  std::optional<LayerStackFile> mention_stacks;
  std::optional<LayerStackFile> label_stacks;
  std::optional<NodeEmbeddings> nodes;

  TargetSources targets() const {
    return {ft ? &*ft : nullptr, label_stacks ? &*label_stacks : nullptr, kTopLayer, nodes ? &*nodes : nullptr};
  }
};

struct VectorPaths {
  std::string ft, mention_stacks, label_stacks, nodes;

  void add(CLI::App& cmd, bool with_nodes) {
    cmd.add_option("--ft-vectors", ft, "Static word vectors (word2vec text format)")->check(CLI::ExistingFile);
    cmd.add_option("--mention-stacks", mention_stacks, "Per-layer mention embeddings keyed by mention id")
        ->check(CLI::ExistingFile);
    cmd.add_option("--label-stacks", label_stacks, "Per-layer label embeddings keyed label:<sctid>:<i>")
        ->check(CLI::ExistingFile);
    if (with_nodes)
      cmd.add_option("--node-vectors", nodes, "node2vec concept embeddings")->check(CLI::ExistingFile);
  }

  // Loads only what the recipe needs.
  VectorSources load(const Recipe& r, Manifest& m) const {
    VectorSources v;
    auto need = [&](const std::string& path, const char* flag) {
      if (path.empty()) throw ConfigError(std::string("recipe ") + r.name + " needs " + flag);
      return path;
    };
    if (r.uses_ft_vectors()) {
      v.ft = WordVectorStore::load(need(ft, "--ft-vectors"));
      m.input("ft-vectors", ft);
      if (v.ft->duplicates()) warn(std::to_string(v.ft->duplicates()) + " duplicate word vectors ignored");
    }
    if (r.stack_mode != StackMode::None) {
      v.mention_stacks = LayerStackFile::load(need(mention_stacks, "--mention-stacks"));
      m.input("mention-stacks", mention_stacks);
    }
    for (auto p : r.target)
      if (p == TargetPart::BertLabel && !v.label_stacks) {
        v.label_stacks = LayerStackFile::load(need(label_stacks, "--label-stacks"));
        m.input("label-stacks", label_stacks);
      }
    if (r.uses_nodes() && !nodes.empty()) {
      v.nodes = NodeEmbeddings::load(nodes);
      m.input("node-vectors", nodes);
    }
    return v;
  }
};

// Term inputs for a list of mentions. Holds the storage the spans point at.
class InputSet {
 public:
  InputSet(const std::vector<Mention>& ms, const AlignShape& shape, const VectorSources& src) {
    ft_.reserve(ms.size());
    for (const auto& m : ms) ft_.push_back(shape.ft_dim ? term_embedding(*src.ft, m.term).values : Vector{});
    for (std::size_t i = 0; i < ms.size(); ++i) {
      TermInputs in{ft_[i], nullptr};
      if (shape.stack_mode != StackMode::None) {
        in.stack = src.mention_stacks->find(std::to_string(ms[i].id));
        if (!in.stack) throw ValidationError("no layer stack for mention " + std::to_string(ms[i].id));
      }
      inputs_.push_back(in);
    }
  }

  const TermInputs& operator[](std::size_t i) const { return inputs_[i]; }

  std::vector<AlignExample> examples(const std::vector<Mention>& ms, Level level) const {
    std::vector<AlignExample> out;
    for (std::size_t i = 0; i < ms.size(); ++i) out.push_back({inputs_[i], ms[i].gold(level)});
    return out;
  }

 private:
  std::vector<Vector> ft_;
  std::vector<TermInputs> inputs_;
};

// Node embeddings from flags, used by train-align and bench.
struct Node2vecOptions {
  WalkConfig walk;
  SgnsConfig sgns;

  void add(CLI::App& cmd, const std::string& prefix) {
    cmd.add_option("--p", walk.p, "Return parameter")->check(CLI::PositiveNumber);
    cmd.add_option("--q", walk.q, "In-out parameter")->check(CLI::PositiveNumber);
    cmd.add_option("--walk-length", walk.walk_length, "Nodes per walk")->check(CLI::PositiveNumber);
    cmd.add_option("--walks", walk.walks_per_node, "Walks started from every node")->check(CLI::PositiveNumber);
    cmd.add_option("--" + prefix + "dim", sgns.dim, "Embedding dimension")->check(CLI::PositiveNumber);
    cmd.add_option("--window", sgns.window, "Skip-gram window")->check(CLI::PositiveNumber);
    cmd.add_option("--neg", sgns.negatives, "Negative samples per pair")->check(CLI::PositiveNumber);
    cmd.add_option("--" + prefix + "epochs", sgns.epochs, "Passes over the walk corpus");
    cmd.add_option("--" + prefix + "lr", sgns.learning_rate, "Initial learning rate")->check(CLI::NonNegativeNumber);
  }

  NodeEmbeddings run(const ConceptGraph& g, const Common& common) {
    walk.seed = derive_seed(common.seed, 1);
    sgns.seed = derive_seed(common.seed, 2);
    walk.workers = sgns.workers = common.workers;
    return node2vec(g, walk, sgns);
  }
};

struct TrainOptions {
  TrainConfig cfg;
  std::optional<double> lr;
  std::size_t branch_dim = 300;

  void add(CLI::App& cmd) {
    cmd.add_option("--alpha", cfg.alpha, "Triplet margin")->check(CLI::PositiveNumber);
    cmd.add_option("--batch-size", cfg.batch_size, "Mini-batch size")->check(CLI::Range(2, 1 << 20));
    cmd.add_option("--epochs", cfg.epochs, "Training epochs");
    cmd.add_option("--lr", lr, "Learning rate (default: the recipe's)")->check(CLI::NonNegativeNumber);
    cmd.add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
    cmd.add_option("--branch-dim", branch_dim, "Output size of the term-vector branch transform")
        ->check(CLI::PositiveNumber);
  }
};

struct Trained {
  AlignModel model;
  ConceptTargetIndex index;
  TrainResult result;
};

Trained train_recipe(const Recipe& r, const ConceptGraph& g, const std::vector<Mention>& train_ms,
                     const std::vector<Mention>& dev_ms, Level level, const VectorSources& src,
                     const TrainOptions& opt, std::uint64_t seed) {
  auto built = build_target_index(g, r.target, src.targets());
  if (built.oov_labels) warn(std::to_string(built.oov_labels) + " concepts have no label vector (zero target part)");
  if (built.missing_nodes) warn(std::to_string(built.missing_nodes) + " concepts have no node vector (zero-filled)");
  const std::size_t ft_dim = r.uses_ft ? src.ft->dim() : 0;
  const std::size_t layers = src.mention_stacks ? src.mention_stacks->layers() : 0;
  const std::size_t sdim = src.mention_stacks ? src.mention_stacks->dim() : 0;
  const auto shape = recipe_shape(r, ft_dim, layers, sdim, built.index.dim(), opt.branch_dim);

  auto model = init_model(shape, derive_seed(seed, 3));
  model.recipe = r.name;
  TrainConfig cfg = opt.cfg;
  cfg.learning_rate = opt.lr.value_or(r.learning_rate);
  cfg.seed = derive_seed(seed, 4);

  const InputSet train_in(train_ms, shape, src), dev_in(dev_ms, shape, src);
  const auto train_ex = train_in.examples(train_ms, level);
  const auto dev_ex = dev_in.examples(dev_ms, level);
  info("training " + r.name + ": " + std::to_string(train_ex.size()) + " examples, input " +
       std::to_string(shape.input_dim()) + " -> output " + std::to_string(shape.out_dim));
  auto result = train(model, train_ex, dev_ex, built.index, cfg);
  info(r.name + ": best epoch " + std::to_string(result.best_epoch) +
       (result.dev_acc1.empty() ? std::string() : ", dev Acc@1 " + format_fixed_half_up(result.dev_acc1[result.best_epoch - 1], 3)));
  auto trained = result.model;
  return {std::move(trained), std::move(built.index), std::move(result)};
}

std::string trace_text(const TrainResult& r) {
  std::string out = "epoch\ttrain_loss\tdev_acc1\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    out += std::to_string(e + 1) + '\t' + format_double(r.train_loss[e]) + '\t' +
           (e < r.dev_acc1.size() ? format_double(r.dev_acc1[e]) : std::string("-")) + '\n';
  out += "best_epoch\t" + std::to_string(r.best_epoch) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Linking
// ---------------------------------------------------------------------------

struct LinkContext {
  const ConceptGraph* graph = nullptr;
  const Dictionary* dictionary = nullptr;
  const LabelScanner* scanner = nullptr;
  std::map<Metric, double> taus;  // used by fuzzy stages without an explicit threshold
  const AlignModel* model = nullptr;
  const ConceptTargetIndex* index = nullptr;
};

Cascade build_cascade(const std::vector<StageSpec>& specs, const LinkContext& ctx) {
  std::vector<Stage> stages;
  for (const auto& s : specs) {
    switch (s.kind) {
      case StageSpec::Kind::Dictionary:
        if (!ctx.dictionary) throw ConfigError("dictionary stage needs --dict or --train");
        stages.emplace_back(DictionaryStage{ctx.dictionary});
        break;
      case StageSpec::Kind::Exact:
        stages.emplace_back(ExactStage{ctx.graph});
        break;
      case StageSpec::Kind::Fuzzy: {
        double tau = 0;
        if (s.tau) {
          tau = *s.tau;
        } else if (auto it = ctx.taus.find(s.metric); it != ctx.taus.end()) {
          tau = it->second;
        } else {
          throw ConfigError(std::string(to_string(s.metric)) + " stage needs a threshold (--tau, --tune or spec)");
        }
        stages.emplace_back(FuzzyStage{ctx.scanner, s.metric, tau});
        break;
      }
      case StageSpec::Kind::Neural:
        if (!ctx.model) throw ConfigError("neural stage needs --checkpoint");
        stages.emplace_back(NeuralStage{ctx.model, ctx.index, s.name});
        break;
    }
  }
  return Cascade::build(std::move(stages));
}

bool has_neural(const std::vector<StageSpec>& specs) {
  return std::any_of(specs.begin(), specs.end(), [](const auto& s) { return s.kind == StageSpec::Kind::Neural; });
}

bool has_fuzzy(const std::vector<StageSpec>& specs, Metric m) {
  return std::any_of(specs.begin(), specs.end(),
                     [&](const auto& s) { return s.kind == StageSpec::Kind::Fuzzy && s.metric == m && !s.tau; });
}

// Links every mention; results are placed by position so the output does
// not depend on the worker count.
std::vector<PredictionRow> link_all(const Cascade& c, const std::vector<Mention>& ms, const InputSet* inputs,
                                    std::size_t k, std::size_t workers) {
  std::vector<LinkResult> results(ms.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      results[i] = c.link({ms[i].id, ms[i].term, inputs ? (*inputs)[i] : TermInputs{}}, k);
  };
  workers = std::max<std::size_t>(1, std::min(workers, ms.size()));
  if (workers == 1) {
    run(0, ms.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (ms.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(ms.size(), b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
  }
  std::vector<PredictionRow> rows;
  for (std::size_t i = 0; i < ms.size(); ++i)
    for (std::size_t r = 0; r < results[i].candidates.size(); ++r)
      rows.push_back({ms[i].id, r + 1, results[i].candidates[r].sctid, results[i].candidates[r].score,
                      results[i].provenance});
  return rows;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct IngestCmd {
  GraphPaths graph;
  std::string out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("ingest-kg", "Validate a concept graph and write it in canonical order");
    graph.add(*cmd, true);
    cmd->add_option("--out", out, "Output directory")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    const fs::path dir(out);
    ensure_dir(dir);
    Manifest m(cmd, dir / "manifest.txt", 0);
    const auto g = graph.load(&m);
    save_graph(g, (dir / "concepts.tsv").string(), (dir / "edges.tsv").string());
    m.output(dir / "concepts.tsv");
    m.output(dir / "edges.tsv");
    m.write();
    std::cout << "concepts=" << g.size() << "\nedges=" << g.edge_count() << '\n';
  }
};

struct SplitCmd {
  GraphPaths graph;
  Common common;
  std::string corpus, kind = "stratified", level = "general", ratios = "0.675,0.11,0.215", out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("split", "Partition a corpus into train/dev/test");
    cmd->add_option("--corpus", corpus, "Mention corpus TSV")->required()->check(CLI::ExistingFile);
    graph.add(*cmd, false);
    cmd->add_option("--kind", kind, "stratified or zero-shot");
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--ratios", ratios, "train,dev,test fractions");
    common.add(*cmd, true);
    cmd->add_option("--out", out, "Output directory")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    common.announce_seed();
    auto k = parse_split_kind(kind);
    if (!k) throw ConfigError("unknown split kind '" + kind + "'");
    const fs::path dir(out);
    ensure_dir(dir);
    Manifest m(cmd, dir / "manifest.txt", common.seed);
    const auto ms = load_corpus(corpus);
    m.input("corpus", corpus);
    if (graph.given()) validate_corpus(ms, graph.load(&m));
    const auto s = make_split(ms, level_from(level), *k, ratios_from(ratios), common.seed);
    save_split(s, dir.string(), file_checksum(corpus));
    for (const char* f : {"train.tsv", "dev.tsv", "test.tsv", "split.meta"}) m.output(dir / f);
    m.write();
    const auto st = split_stats(s);
    std::cout << "train=" << s.train.size() << "\ndev=" << s.dev.size() << "\ntest=" << s.test.size()
              << "\ntest_concept_coverage=" << format_double(st.test_concept_coverage) << '\n';
  }
};

struct BuildDictCmd {
  std::string train_path, level = "general", out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("build-dict", "Build the surface-form dictionary from training mentions");
    cmd->add_option("--train", train_path, "Training mentions")->required()->check(CLI::ExistingFile);
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--out", out, "Dictionary TSV")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    ensure_parent(out);
    Manifest m(cmd, manifest_for(out), 0);
    m.input("train", train_path);
    const auto d = build_dictionary(load_corpus(train_path), level_from(level));
    d.save(out);
    m.output(out);
    m.write();
    std::cout << "entries=" << d.size() << '\n';
  }
};

struct TuneCmd {
  GraphPaths graph;
  std::string dev, metric = "stoilos", level = "general", grid, out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("tune-threshold", "Pick the fuzzy-matching threshold with the best dev Acc@1");
    graph.add(*cmd, true);
    cmd->add_option("--dev", dev, "Development mentions")->required()->check(CLI::ExistingFile);
    cmd->add_option("--metric", metric, "lev or stoilos");
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--grid", grid, "Comma-separated thresholds (default: the metric's grid)");
    cmd->add_option("--out", out, "Result file (key=value)")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    ensure_parent(out);
    Manifest m(cmd, manifest_for(out), 0);
    const auto g = graph.load(&m);
    m.input("dev", dev);
    const auto met = metric_from(metric);
    const auto values = grid_from(grid, met);
    const auto r = tune_threshold(LabelScanner(g), load_corpus(dev), level_from(level), met, values);
    auto sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::string text = "metric=" + std::string(to_string(met)) + "\ntau=" + format_double(r.tau) +
                       "\nacc1=" + format_double(r.acc1) + "\n";
    for (std::size_t i = 0; i < sorted.size(); ++i)
      text += "grid=" + format_double(sorted[i]) + "," + format_double(r.accuracy[i]) + "\n";
    write_file(out, text);
    m.output(out);
    m.write();
    std::cout << text;
  }
};

struct Node2vecCmd {
  GraphPaths graph;
  Common common;
  Node2vecOptions opts;
  std::string out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("node2vec", "Train concept embeddings from biased random walks");
    graph.add(*cmd, true);
    opts.add(*cmd, "");
    common.add(*cmd, true);
    cmd->add_option("--out", out, "Embedding file")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) {
    common.announce_seed();
    if (common.workers > 1) info("--workers > 1: embeddings are not bit-reproducible");
    ensure_parent(out);
    Manifest m(cmd, manifest_for(out), common.seed);
    const auto g = graph.load(&m);
    const auto emb = opts.run(g, common);
    emb.save(out);
    m.output(out);
    m.write();
    std::cout << "nodes=" << emb.size() << "\ndim=" << emb.dim() << '\n';
  }
};

struct TrainAlignCmd {
  GraphPaths graph;
  Common common;
  VectorPaths vectors;
  TrainOptions opts;
  std::string recipe_name = "n6", train_path, dev_path, level = "general", out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-align", "Train a term-to-concept alignment model");
    graph.add(*cmd, true);
    cmd->add_option("--recipe", recipe_name, "Model recipe n1..n6");
    cmd->add_option("--train", train_path, "Training mentions")->required()->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev_path, "Development mentions for model selection")->check(CLI::ExistingFile);
    cmd->add_option("--level", level, "general or specific");
    vectors.add(*cmd, true);
    opts.add(*cmd);
    common.add(*cmd, true);
    cmd->add_option("--out", out, "Checkpoint file")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    common.announce_seed();
    const auto r = recipe(recipe_name);
    if (r.uses_nodes() && vectors.nodes.empty()) throw ConfigError("recipe " + r.name + " needs --node-vectors");
    ensure_parent(out);
    Manifest m(cmd, manifest_for(out), common.seed);
    const auto g = graph.load(&m);
    const auto src = vectors.load(r, m);
    m.input("train", train_path);
    const auto train_ms = load_corpus(train_path);
    std::vector<Mention> dev_ms;
    if (!dev_path.empty()) {
      m.input("dev", dev_path);
      dev_ms = load_corpus(dev_path);
    }
    const auto t = train_recipe(r, g, train_ms, dev_ms, level_from(level), src, opts, common.seed);
    save_checkpoint(t.model, out);
    write_file(out + ".trace", trace_text(t.result));
    m.output(out);
    m.output(out + ".trace");
    m.write();
    std::cout << "best_epoch=" << t.result.best_epoch << '\n';
  }
};

struct LinkCmd {
  GraphPaths graph;
  Common common;
  VectorPaths vectors;
  std::string method = "cascade", cascade_spec = "dict+stoilos+neural:n6", metric = "stoilos", test, train_path,
              dict_path, dev, checkpoint, level = "general", report, out;
  std::optional<double> tau;
  bool tune = false;
  std::size_t k = 10;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("link", "Link mentions to concepts and write ranked predictions");
    graph.add(*cmd, true);
    cmd->add_option("--method", method, "dictionary, exact, lev, stoilos, neural or cascade")
        ->check(CLI::IsMember({"dictionary", "exact", "lev", "stoilos", "neural", "cascade"}));
    cmd->add_option("--cascade-spec", cascade_spec, "Stages joined by '+', e.g. dict+stoilos:0.07+neural:n6");
    cmd->add_option("--metric", metric, "Fuzzy metric for --tune with --method cascade (lev or stoilos)");
    cmd->add_option("--tau", tau, "Fuzzy threshold")->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--tune", tune, "Tune fuzzy thresholds on --dev");
    cmd->add_option("--test", test, "Mentions to link")->required()->check(CLI::ExistingFile);
    cmd->add_option("--train", train_path, "Training mentions (builds the dictionary)")->check(CLI::ExistingFile);
    cmd->add_option("--dict", dict_path, "Prebuilt dictionary")->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev, "Development mentions for --tune")->check(CLI::ExistingFile);
    cmd->add_option("--checkpoint", checkpoint, "Alignment model checkpoint")->check(CLI::ExistingFile);
    vectors.add(*cmd, true);
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--k", k, "Candidates per mention")->check(CLI::PositiveNumber);
    cmd->add_option("--report", report, "Also score the predictions and write a machine report here");
    common.add(*cmd, false);
    cmd->add_option("--out", out, "Predictions TSV")->required();
    return cmd;
  }

  std::string spec_text() const {
    if (method == "cascade") return cascade_spec;
    if (method == "dictionary") return "dict";
    if (method == "neural") return "neural";
    return method;
  }

  void run(const CLI::App& cmd) const {
    const auto lvl = level_from(level);
    auto specs = parse_cascade_spec(spec_text());
    ensure_parent(out);
    Manifest m(cmd, manifest_for(out), 0);
    const auto g = graph.load(&m);
    LinkContext ctx;
    ctx.graph = &g;

    std::optional<Dictionary> dict;
    if (!dict_path.empty()) {
      dict = Dictionary::load(dict_path);
      m.input("dict", dict_path);
    } else if (!train_path.empty()) {
      dict = build_dictionary(load_corpus(train_path), lvl);
      m.input("train", train_path);
    }
    if (dict) ctx.dictionary = &*dict;

    const LabelScanner scanner(g);
    ctx.scanner = &scanner;
    for (auto met : {Metric::LevenshteinRatio, Metric::StoilosDistance}) {
      if (!has_fuzzy(specs, met)) continue;
      if (tau && !tune) {
        ctx.taus[met] = *tau;
      } else if (tune) {
        if (dev.empty()) throw ConfigError("--tune needs --dev");
        const auto r = tune_threshold(scanner, load_corpus(dev), lvl, met, default_grid(met));
        info("tuned " + std::string(to_string(met)) + " threshold: " + format_double(r.tau) + " (dev Acc@1 " +
             format_fixed_half_up(r.acc1, 3) + ")");
        ctx.taus[met] = r.tau;
      }
    }
    if (tune && !dev.empty()) m.input("dev", dev);

    std::optional<AlignModel> model;
    std::optional<ConceptTargetIndex> index;
    std::optional<VectorSources> src;
    if (has_neural(specs)) {
      if (checkpoint.empty()) throw ConfigError("neural linking needs --checkpoint");
      model = load_checkpoint(checkpoint);
      m.input("checkpoint", checkpoint);
      const auto r = recipe(model->recipe);
      if (r.uses_nodes() && vectors.nodes.empty()) throw ConfigError("recipe " + r.name + " needs --node-vectors");
      src = vectors.load(r, m);
      index = build_target_index(g, r.target, src->targets()).index;
      ctx.model = &*model;
      ctx.index = &*index;
      for (auto& s : specs)
        if (s.kind == StageSpec::Kind::Neural && s.name == "neural") s.name = r.name;
    }
    const auto cascade = build_cascade(specs, ctx);

    const auto ms = load_corpus(test);
    m.input("test", test);
    std::optional<InputSet> inputs;
    if (model) inputs.emplace(ms, model->shape, *src);
    const auto rows = link_all(cascade, ms, inputs ? &*inputs : nullptr, k, common.workers);
    save_predictions(rows, out);
    m.output(out);

    const auto rep = score(rows, ms, lvl);
    if (!report.empty()) {
      ensure_parent(report);
      write_file(report, machine_report(spec_text(), fs::path(test).stem().string(), lvl, rep));
      m.output(report);
    }
    m.write();
    ReportTable table;
    table.add(spec_text(), fs::path(test).stem().string(), rep);
    std::cout << table.render(TableFormat::Text);
  }
};

struct EvalCmd {
  std::string predictions, gold, level = "general", method_name, split_name, format = "text", out;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Score predictions: Acc@1, Acc@10, MRR");
    cmd->add_option("--predictions", predictions, "Predictions TSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gold", gold, "Gold mentions")->required()->check(CLI::ExistingFile);
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--method", method_name, "Row label (default: predictions file stem)");
    cmd->add_option("--split", split_name, "Column label (default: gold file stem)");
    cmd->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
    cmd->add_option("--out", out, "Machine-readable report (key=value)");
    return cmd;
  }

  void run(const CLI::App& cmd) const {
    const auto lvl = level_from(level);
    const auto gold_ms = load_corpus(gold);
    const auto rep = score(predictions, gold_ms, lvl);
    if (rep.missing) warn(std::to_string(rep.missing) + " gold mentions have no predictions (counted as misses)");
    const auto method = method_name.empty() ? fs::path(predictions).stem().string() : method_name;
    const auto split_label = split_name.empty() ? fs::path(gold).stem().string() : split_name;
    if (!out.empty()) {
      ensure_parent(out);
      Manifest m(cmd, manifest_for(out), 0);
      m.input("predictions", predictions);
      m.input("gold", gold);
      write_file(out, machine_report(method, split_label, lvl, rep));
      m.output(out);
      m.write();
    }
    ReportTable table;
    table.add(method, split_label, rep);
    std::cout << table.render(*parse_table_format(format));
  }
};

// Runs the whole pipeline for each split kind and writes one combined table.
struct BenchCmd {
  GraphPaths graph;
  Common common;
  VectorPaths vectors;
  TrainOptions train_opts;
  Node2vecOptions n2v;
  std::string corpus, kinds = "stratified,zero-shot", level = "general", ratios = "0.675,0.11,0.215",
              recipes = "n6", ensemble, out;
  std::size_t k = 10;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench", "Split, build, tune, train, link and evaluate in one run");
    graph.add(*cmd, true);
    cmd->add_option("--corpus", corpus, "Mention corpus TSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--kinds", kinds, "Comma-separated split kinds");
    cmd->add_option("--level", level, "general or specific");
    cmd->add_option("--ratios", ratios, "train,dev,test fractions");
    cmd->add_option("--recipes", recipes, "Comma-separated neural recipes to train");
    cmd->add_option("--ensemble", ensemble, "Recipe used in back-off cascades (default: last of --recipes)");
    vectors.add(*cmd, false);
    train_opts.add(*cmd);
    n2v.add(*cmd, "n2v-");
    cmd->add_option("--k", k, "Candidates per mention")->check(CLI::PositiveNumber);
    common.add(*cmd, true);
    cmd->add_option("--out", out, "Output directory")->required();
    return cmd;
  }

  void run(const CLI::App& cmd) {
    common.announce_seed();
    const auto lvl = level_from(level);
    const auto split_ratios = ratios_from(ratios);
    std::vector<SplitKind> split_kinds;
    for (const auto& s : split_list(kinds)) {
      auto kind = parse_split_kind(s);
      if (!kind) throw ConfigError("unknown split kind '" + s + "'");
      split_kinds.push_back(*kind);
    }
    std::vector<Recipe> rs;
    for (const auto& name : split_list(recipes)) rs.push_back(recipe(name));
    const std::string ens = ensemble.empty() ? (rs.empty() ? "" : rs.back().name) : ensemble;
    if (!ens.empty() && std::none_of(rs.begin(), rs.end(), [&](const Recipe& r) { return r.name == ens; }))
      throw ConfigError("--ensemble " + ens + " is not among --recipes");

    const fs::path dir(out);
    ensure_dir(dir);
    Manifest m(cmd, dir / "manifest.txt", common.seed);
    const auto g = graph.load(&m);
    const auto all = load_corpus(corpus);
    m.input("corpus", corpus);
    validate_corpus(all, g);

    // Vectors shared by every recipe.
    Recipe any{"bench", false, false, StackMode::None, {}, true, 0};
    for (const auto& r : rs) {
      any.uses_ft |= r.uses_ft_vectors();
      if (r.stack_mode != StackMode::None) any.stack_mode = r.stack_mode;
      for (auto p : r.target)
        if (p == TargetPart::BertLabel) any.target.push_back(p);
    }
    if (any.uses_ft) any.target.push_back(TargetPart::FtLabel);
    auto src = vectors.load(any, m);
    if (std::any_of(rs.begin(), rs.end(), [](const Recipe& r) { return r.uses_nodes(); })) {
      info("training node2vec");
      src.nodes = n2v.run(g, common);
      src.nodes->save((dir / "node2vec.vec").string());
      m.output(dir / "node2vec.vec");
    }

    std::vector<std::string> methods{"dict", "exact", "lev", "stoilos"};
    for (const auto& r : rs) methods.push_back("neural:" + r.name);
    for (const auto* s : {"dict+exact", "dict+lev", "dict+stoilos"}) methods.emplace_back(s);
    if (!ens.empty())
      for (const auto* s : {"dict", "exact", "dict+exact", "dict+lev", "dict+stoilos"})
        methods.push_back(std::string(s) + "+neural:" + ens);

    ReportTable table;
    std::string machine;
    const LabelScanner scanner(g);
    for (auto kind : split_kinds) {
      const std::string kname(to_string(kind));
      const auto sdir = dir / kname;
      ensure_dir(sdir / "predictions");
      const auto split = make_split(all, lvl, kind, split_ratios, derive_seed(common.seed, 10));
      save_split(split, sdir.string(), file_checksum(corpus));
      for (const char* f : {"train.tsv", "dev.tsv", "test.tsv", "split.meta"}) m.output(sdir / f);

      const auto dict = build_dictionary(split.train, lvl);
      dict.save((sdir / "dictionary.tsv").string());
      m.output(sdir / "dictionary.tsv");

      LinkContext ctx;
      ctx.graph = &g;
      ctx.dictionary = &dict;
      ctx.scanner = &scanner;
      std::string thresholds;
      for (auto met : {Metric::LevenshteinRatio, Metric::StoilosDistance}) {
        const auto r = tune_threshold(scanner, split.dev, lvl, met, default_grid(met));
        ctx.taus[met] = r.tau;
        thresholds += std::string(to_string(met)) + "=" + format_double(r.tau) + "\n";
      }
      write_file((sdir / "thresholds.txt").string(), thresholds);
      m.output(sdir / "thresholds.txt");

      std::map<std::string, Trained> models;
      for (const auto& r : rs) {
        auto t = train_recipe(r, g, split.train, split.dev, lvl, src, train_opts, derive_seed(common.seed, 20));
        const auto ckpt = sdir / (r.name + ".ckpt");
        save_checkpoint(t.model, ckpt.string());
        write_file(ckpt.string() + ".trace", trace_text(t.result));
        m.output(ckpt);
        m.output(fs::path(ckpt.string() + ".trace"));
        models.emplace(r.name, std::move(t));
      }
      std::map<std::string, InputSet> inputs;
      for (const auto& [name, t] : models) inputs.emplace(name, InputSet(split.test, t.model.shape, src));

      for (const auto& method : methods) {
        auto specs = parse_cascade_spec(method);
        const InputSet* in = nullptr;
        LinkContext c = ctx;
        for (const auto& s : specs)
          if (s.kind == StageSpec::Kind::Neural) {
            const auto& t = models.at(s.name);
            c.model = &t.model;
            c.index = &t.index;
            in = &inputs.at(s.name);
          }
        const auto rows = link_all(build_cascade(specs, c), split.test, in, k, common.workers);
        auto file = method;
        std::replace(file.begin(), file.end(), ':', '-');
        const auto pred = sdir / "predictions" / (file + ".tsv");
        save_predictions(rows, pred.string());
        m.output(pred);
        const auto rep = score(rows, split.test, lvl);
        table.add(method, kname, rep);
        machine += machine_report(method, kname, lvl, rep);
      }
    }
    write_file((dir / "report.txt").string(), table.render(TableFormat::Text));
    write_file((dir / "report.csv").string(), table.render(TableFormat::Csv));
    write_file((dir / "report.machine").string(), machine);
    for (const char* f : {"report.txt", "report.csv", "report.machine"}) m.output(dir / f);
    m.write();
    std::cout << table.render(TableFormat::Text);
  }
};

struct StrsimCmd {
  std::string a, b;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("strsim", "Print the string-similarity breakdown for two terms");
    cmd->add_option("a", a)->required();
    cmd->add_option("b", b)->required();
    return cmd;
  }

  void run() const {
    const auto x = fold_case(std::string_view(a)), y = fold_case(std::string_view(b));
    const auto br = stoilos_breakdown(std::string_view(x), std::string_view(y));
    std::cout << "levenshtein=" << levenshtein(std::string_view(x), std::string_view(y))
              << "\nlevenshtein_ratio=" << format_double(levenshtein_ratio(std::string_view(x), std::string_view(y)))
              << "\ncomm=" << format_double(br.comm) << "\ndiff=" << format_double(br.diff)
              << "\nwinkler=" << format_double(br.winkler) << "\nstoilos_similarity=" << format_double(br.similarity())
              << "\nstoilos_distance=" << format_double(stoilos_distance(std::string_view(x), std::string_view(y)))
              << '\n';
  }
};

struct InspectCmd {
  std::string path;
  bool stacks = false;

  CLI::App* add(CLI::App& app) {
    auto* cmd = app.add_subcommand("inspect", "Check a word-vector or layer-stack file and print its header");
    cmd->add_option("file", path)->required()->check(CLI::ExistingFile);
    cmd->add_flag("--stacks", stacks, "Treat the file as a layer-stack file");
    return cmd;
  }

  void run() const {
    if (stacks) {
      const auto f = LayerStackFile::load(path);
      std::cout << "records=" << f.size() << "\nlayers=" << f.layers() << "\ndim=" << f.dim() << '\n';
    } else {
      const auto f = WordVectorStore::load(path);
      std::cout << "records=" << f.size() << "\ndim=" << f.dim() << "\nduplicates=" << f.duplicates() << '\n';
    }
  }
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const medlink::ParseError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InfeasibleError*>(&e) ||
      dynamic_cast<const NotFoundError*>(&e))
    return 1;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medlink: link free-text medical mentions to knowledge-graph concepts", "medlink"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "Read options from a TOML/INI file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.add_flag("--quiet", g_quiet, "Suppress progress messages");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  IngestCmd ingest;
  SplitCmd split_cmd;
  BuildDictCmd build_dict;
  TuneCmd tune;
  Node2vecCmd n2v;
  TrainAlignCmd train_align;
  LinkCmd link;
  EvalCmd eval;
  BenchCmd bench;
  StrsimCmd strsim;
  InspectCmd inspect;
  // Dispatch happens after parsing: a config file that names the invoked
  // subcommand would otherwise trigger its callback a second time.
  std::vector<std::pair<CLI::App*, std::function<void(const CLI::App&)>>> commands;
  auto reg = [&](CLI::App* cmd, auto& c) {
    cmd->configurable();
    commands.emplace_back(cmd, [&c](const CLI::App& self) {
      if constexpr (requires { c.run(self); }) c.run(self);
      else c.run();
    });
  };
  reg(ingest.add(app), ingest);
  reg(split_cmd.add(app), split_cmd);
  reg(build_dict.add(app), build_dict);
  reg(tune.add(app), tune);
  reg(n2v.add(app), n2v);
  reg(train_align.add(app), train_align);
  reg(link.add(app), link);
  reg(eval.add(app), eval);
  reg(bench.add(app), bench);
  reg(strsim.add(app), strsim);
  reg(inspect.add(app), inspect);

  try {
    app.parse(argc, argv);
    for (auto& [cmd, run] : commands)
      if (cmd->parsed()) {
        run(*cmd);
        break;
      }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "medlink: error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "medlink: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
