#pragma once

// Neural ranking over concept targets and back-off cascades over
// dictionary, exact, fuzzy and neural stages.

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "medlink/align.hpp"
#include "medlink/embed_store.hpp"
#include "medlink/error.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/matchers.hpp"
#include "medlink/node2vec.hpp"
#include "medlink/target_index.hpp"

namespace medlink {

// ---------------------------------------------------------------------------
// Concept targets and model recipes
// ---------------------------------------------------------------------------

/// One component of a concept target vector.
enum class TargetPart { FtLabel, BertLabel, Node };

inline std::string_view to_string(TargetPart p) {
  switch (p) {
    case TargetPart::FtLabel: return "ft-label";
    case TargetPart::BertLabel: return "bert-label";
    case TargetPart::Node: return "node2vec";
  }
  return "?";
}

/// Where target components come from. Only the sources named by a recipe
/// need to be set.
struct TargetSources {
  const WordVectorStore* ft = nullptr;
  const LayerStackFile* label_stacks = nullptr;
  std::size_t bert_layer = kTopLayer;
  const NodeEmbeddings* nodes = nullptr;
};

struct TargetBuild {
  ConceptTargetIndex index;
  std::size_t oov_labels = 0;    // concepts whose label parts are all-OOV (zero)
  std::size_t missing_nodes = 0; // concepts zero-filled for lack of a node vector
};

inline std::size_t part_dim(TargetPart part, const TargetSources& src) {
  switch (part) {
    case TargetPart::FtLabel:
      if (!src.ft) throw ConfigError("ft-label target needs word vectors");
      return src.ft->dim();
    case TargetPart::BertLabel:
      if (!src.label_stacks) throw ConfigError("bert-label target needs label layer stacks");
      return src.label_stacks->dim();
    case TargetPart::Node:
      if (!src.nodes) throw ConfigError("node2vec target needs node embeddings");
      return src.nodes->dim();
  }
  return 0;
}

/// Concatenates the requested parts for every concept, ascending sctid.
inline TargetBuild build_target_index(const ConceptGraph& g, std::span<const TargetPart> parts,
                                      const TargetSources& src) {
  if (parts.empty()) throw ConfigError("target recipe is empty");
  std::size_t dim = 0;
  for (auto p : parts) dim += part_dim(p, src);
  std::size_t bert_layer = 0;
  if (src.label_stacks)
    bert_layer = src.bert_layer == kTopLayer ? src.label_stacks->layers() - 1 : src.bert_layer;
  if (src.label_stacks && bert_layer >= src.label_stacks->layers()) throw ConfigError("bert layer out of range");

  TargetBuild out;
  std::vector<std::pair<Sctid, Vector>> targets;
  targets.reserve(g.size());
  for (const auto& c : g.concepts()) {
    Vector v;
    v.reserve(dim);
    bool label_oov = false;
    for (auto p : parts) {
      switch (p) {
        case TargetPart::FtLabel: {
          auto t = concept_label_embedding(*src.ft, g, c.sctid);
          label_oov |= t.oov;
          v.insert(v.end(), t.values.begin(), t.values.end());
          break;
        }
        case TargetPart::BertLabel: {
          auto t = concept_label_layer(*src.label_stacks, g, c.sctid, bert_layer);
          label_oov |= t.oov;
          v.insert(v.end(), t.values.begin(), t.values.end());
          break;
        }
        case TargetPart::Node: {
          const auto* n = src.nodes->find(c.sctid);
          if (n) {
            v.insert(v.end(), n->begin(), n->end());
          } else {
            ++out.missing_nodes;
            v.insert(v.end(), src.nodes->dim(), 0.0);
          }
          break;
        }
      }
    }
    out.oov_labels += label_oov;
    targets.emplace_back(c.sctid, std::move(v));
  }
  out.index = ConceptTargetIndex(dim, std::move(targets));
  return out;
}

/// Named term/concept pairing of the neural baselines:
///   n1  FT-term             -> FT-label
///   n2  FT-term             -> node2vec
///   n3  BERT-term (1 layer) -> BERT-label
///   n4  BERT-term (MLA)     -> BERT-label
///   n5  FT-term             -> FT-label + node2vec               (linear)
///   n6  [W'FT-term+b']_+ + BERT-term (MLA)
///                           -> FT-label + node2vec + BERT-label  (linear)
struct Recipe {
  std::string name;
  bool uses_ft = false;
  bool ft_transform = false;
  StackMode stack_mode = StackMode::None;
  std::vector<TargetPart> target;
  bool use_relu = true;
  double learning_rate = 1e-4;

  bool uses_stacks() const {
    if (stack_mode != StackMode::None) return true;
    for (auto p : target)
      if (p == TargetPart::BertLabel) return true;
    return false;
  }
  bool uses_nodes() const {
    for (auto p : target)
      if (p == TargetPart::Node) return true;
    return false;
  }
  bool uses_ft_vectors() const {
    if (uses_ft) return true;
    for (auto p : target)
      if (p == TargetPart::FtLabel) return true;
    return false;
  }
};

inline Recipe recipe(std::string_view name) {
  using enum TargetPart;
  if (name == "n1") return {"n1", true, false, StackMode::None, {FtLabel}, true, 1e-4};
  if (name == "n2") return {"n2", true, false, StackMode::None, {Node}, true, 1e-4};
  if (name == "n3") return {"n3", false, false, StackMode::Layer, {BertLabel}, true, 1e-4};
  if (name == "n4") return {"n4", false, false, StackMode::Mla, {BertLabel}, true, 1e-4};
  if (name == "n5") return {"n5", true, false, StackMode::None, {FtLabel, Node}, false, 1e-5};
  if (name == "n6") return {"n6", true, true, StackMode::Mla, {FtLabel, Node, BertLabel}, false, 1e-5};
  throw ConfigError("unknown model recipe '" + std::string(name) + "'");
}

/// Model shape for a recipe given the available input dimensions.
inline AlignShape recipe_shape(const Recipe& r, std::size_t ft_dim, std::size_t stack_layers, std::size_t stack_dim,
                               std::size_t out_dim, std::size_t branch_dim = 300, std::size_t stack_layer = kTopLayer) {
  AlignShape s;
  s.ft_dim = r.uses_ft ? ft_dim : 0;
  s.ft_transform = r.ft_transform;
  s.ft_transform_dim = branch_dim;
  s.stack_mode = r.stack_mode;
  if (r.stack_mode != StackMode::None) {
    s.stack_layers = stack_layers;
    s.stack_dim = stack_dim;
    s.stack_layer = stack_layer;
  }
  s.out_dim = out_dim;
  s.use_relu = r.use_relu;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Cascade
// ---------------------------------------------------------------------------

struct LinkQuery {
  std::int64_t mention_id = 0;
  std::string_view term;
  TermInputs inputs;
};

struct LinkResult {
  std::optional<Sctid> sctid;
  std::string provenance;              // tag of the stage that answered, "miss" otherwise
  std::vector<ScoredConcept> candidates;  // ranked list; string hits give one entry

  bool hit() const noexcept { return sctid.has_value(); }
};

class Cascade;

struct DictionaryStage {
  const Dictionary* dictionary = nullptr;
};
struct ExactStage {
  const ConceptGraph* graph = nullptr;
};
struct FuzzyStage {
  const LabelScanner* scanner = nullptr;
  Metric metric = Metric::StoilosDistance;
  double tau = 0.0;
};
struct NeuralStage {
  const AlignModel* model = nullptr;
  const ConceptTargetIndex* index = nullptr;
  std::string name = "neural";
};
struct NestedStage {
  std::shared_ptr<const Cascade> inner;
};

using Stage = std::variant<DictionaryStage, ExactStage, FuzzyStage, NeuralStage, NestedStage>;

/// Ordered back-off: the first stage that does not miss answers. Neural
/// stages never miss, so nothing may follow one.
class Cascade {
 public:
  static Cascade build(std::vector<Stage> stages) {
    if (stages.empty()) throw ConfigError("cascade has no stages");
    Cascade c;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& st = stages[i];
      if (i > 0 && is_terminal(stages[i - 1]))
        throw ConfigError("cascade stage " + std::to_string(i + 1) + " follows a neural stage and can never run");
      std::visit(
          [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            bool ok = true;
            if constexpr (std::is_same_v<T, DictionaryStage>) ok = s.dictionary != nullptr;
            if constexpr (std::is_same_v<T, ExactStage>) ok = s.graph != nullptr;
            if constexpr (std::is_same_v<T, FuzzyStage>) ok = s.scanner != nullptr && s.tau >= 0.0 && s.tau <= 1.0;
            if constexpr (std::is_same_v<T, NeuralStage>)
              ok = s.model != nullptr && s.index != nullptr && s.index->dim() == s.model->shape.out_dim;
            if constexpr (std::is_same_v<T, NestedStage>) ok = s.inner != nullptr;
            if (!ok) throw ConfigError("cascade stage is incompletely configured");
          },
          st);
    }
    c.stages_ = std::move(stages);
    return c;
  }

  const std::vector<Stage>& stages() const noexcept { return stages_; }

  /// True when the cascade ends in a stage that always answers.
  bool terminal() const { return is_terminal(stages_.back()); }

  LinkResult link(const LinkQuery& q, std::size_t k = 10) const {
    for (const auto& st : stages_) {
      auto r = run(st, q, k);
      if (r.hit()) return r;
    }
    return {std::nullopt, "miss", {}};
  }

 private:
  static bool is_terminal(const Stage& st) {
    if (std::holds_alternative<NeuralStage>(st)) return true;
    if (auto* n = std::get_if<NestedStage>(&st)) return n->inner && n->inner->terminal();
    return false;
  }

  static LinkResult from_match(const MatchResult& m, std::string provenance) {
    if (!m.hit()) return {std::nullopt, "miss", {}};
    return {m.sctid, std::move(provenance), {{*m.sctid, m.score}}};
  }

  static LinkResult run(const Stage& st, const LinkQuery& q, std::size_t k) {
    if (auto* s = std::get_if<DictionaryStage>(&st)) return from_match(s->dictionary->lookup(q.term), "dictionary");
    if (auto* s = std::get_if<ExactStage>(&st)) return from_match(exact_match(*s->graph, q.term), "exact");
    if (auto* s = std::get_if<FuzzyStage>(&st))
      return from_match(s->scanner->match(q.term, s->metric, s->tau),
                        std::string(to_string(s->metric)) + ':' + format_double(s->tau));
    if (auto* s = std::get_if<NeuralStage>(&st)) {
      auto ranked = rank(*s->index, align_forward(*s->model, q.inputs), k);
      const auto top = ranked.front().sctid;
      return {top, "neural:" + s->name, std::move(ranked)};
    }
    return std::get<NestedStage>(st).inner->link(q, k);
  }

  std::vector<Stage> stages_;
};

/// One token of a cascade specification such as "dict+stoilos:0.07+neural:n6".
struct StageSpec {
  enum class Kind { Dictionary, Exact, Fuzzy, Neural } kind = Kind::Dictionary;
  Metric metric = Metric::StoilosDistance;
  std::optional<double> tau;  // unset: use the tuned threshold
  std::string name;           // neural model label
};

inline std::vector<StageSpec> parse_cascade_spec(std::string_view spec) {
  std::vector<StageSpec> out;
  for (auto token : split(spec, '+')) {
    const auto colon = token.find(':');
    const auto head = token.substr(0, colon);
    const auto arg = colon == std::string_view::npos ? std::string_view{} : token.substr(colon + 1);
    StageSpec s;
    if (head == "dict" || head == "dictionary") {
      s.kind = StageSpec::Kind::Dictionary;
    } else if (head == "exact") {
      s.kind = StageSpec::Kind::Exact;
    } else if (auto metric = parse_metric(head)) {
      s.kind = StageSpec::Kind::Fuzzy;
      s.metric = *metric;
      if (!arg.empty()) {
        auto tau = parse_double(arg);
        if (!tau || *tau < 0.0 || *tau > 1.0) throw ConfigError("invalid threshold in cascade spec: " + std::string(token));
        s.tau = *tau;
      }
    } else if (head == "neural") {
      s.kind = StageSpec::Kind::Neural;
      s.name = arg.empty() ? "neural" : std::string(arg);
    } else {
      throw ConfigError("unknown cascade stage '" + std::string(token) + "'");
    }
    if (s.kind != StageSpec::Kind::Fuzzy && s.kind != StageSpec::Kind::Neural && !arg.empty())
      throw ConfigError("stage '" + std::string(head) + "' takes no argument");
    if (!out.empty() && out.back().kind == StageSpec::Kind::Neural)
      throw ConfigError("cascade spec has stages after a neural stage");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace medlink
