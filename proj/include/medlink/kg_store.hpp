#pragma once

// SNOMED-style concept graph: concepts with ordered label lists, IS-A edges,
// and a case-folded label index. Immutable once built.

#include <algorithm>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medlink/error.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

struct Concept {
  Sctid sctid;
  std::vector<std::string> labels;  // first is the preferred label
  std::string semantic_tag;
};

/// Directed IS-A edge.
struct IsA {
  Sctid child;
  Sctid parent;

  auto operator<=>(const IsA&) const = default;
};

struct Neighbors {
  std::vector<Sctid> parents;
  std::vector<Sctid> children;
};

class ConceptGraph {
 public:
  ConceptGraph() = default;

  /// Validates and indexes an in-memory graph. Concepts may arrive in any
  /// order; they are stored in ascending sctid order. Repeated edges collapse.
  ConceptGraph(std::vector<Concept> concepts, std::vector<IsA> edges) {
    std::sort(concepts.begin(), concepts.end(),
              [](const Concept& a, const Concept& b) { return a.sctid < b.sctid; });
    for (std::size_t i = 0; i < concepts.size(); ++i) {
      const auto& c = concepts[i];
      if (i > 0 && concepts[i - 1].sctid == c.sctid)
        throw ValidationError("duplicate sctid " + c.sctid.str());
      if (c.labels.empty()) throw ValidationError("concept " + c.sctid.str() + " has no labels");
      for (const auto& l : c.labels)
        if (l.empty()) throw ValidationError("concept " + c.sctid.str() + " has an empty label");
      position_.emplace(c.sctid, i);
    }
    concepts_ = std::move(concepts);

    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    parents_.resize(concepts_.size());
    children_.resize(concepts_.size());
    for (const auto& e : edges) {
      if (!contains(e.child)) throw ValidationError("edge references unknown sctid " + e.child.str());
      if (!contains(e.parent)) throw ValidationError("edge references unknown sctid " + e.parent.str());
      if (e.child == e.parent) throw ValidationError("self-loop on sctid " + e.child.str());
      parents_[index_of(e.child)].push_back(e.parent);
      children_[index_of(e.parent)].push_back(e.child);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());
    edges_ = std::move(edges);

    for (const auto& c : concepts_) {
      for (const auto& l : c.labels) {
        auto& owners = label_index_[fold_case(l)];
        // Concepts are visited in ascending order, so owners stays sorted.
        if (owners.empty() || owners.back() != c.sctid) owners.push_back(c.sctid);
      }
    }
  }

  std::size_t size() const noexcept { return concepts_.size(); }
  bool empty() const noexcept { return concepts_.empty(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  /// Concepts in ascending sctid order.
  const std::vector<Concept>& concepts() const noexcept { return concepts_; }
  const std::vector<IsA>& edges() const noexcept { return edges_; }

  bool contains(Sctid id) const { return position_.contains(id); }

  /// Dense position of a concept in concepts().
  std::size_t index_of(Sctid id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw NotFoundError("unknown sctid " + id.str());
    return it->second;
  }

  const Concept& at(Sctid id) const { return concepts_[index_of(id)]; }

  const std::vector<std::string>& labels_of(Sctid id) const { return at(id).labels; }

  Neighbors neighbors(Sctid id) const {
    const auto i = index_of(id);
    return {parents_[i], children_[i]};
  }

  /// Parents and children merged, ascending, without duplicates. Used by
  /// random walks, which ignore edge direction.
  std::vector<std::size_t> undirected_neighbors(std::size_t index) const {
    std::vector<std::size_t> out;
    out.reserve(parents_[index].size() + children_[index].size());
    for (auto id : parents_[index]) out.push_back(position_.at(id));
    for (auto id : children_[index]) out.push_back(position_.at(id));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Concepts owning a label equal to `term` after case folding, ascending.
  const std::vector<Sctid>& lookup_label(std::string_view term) const {
    static const std::vector<Sctid> none;
    auto it = label_index_.find(fold_case(term));
    return it == label_index_.end() ? none : it->second;
  }

  const std::unordered_map<std::string, std::vector<Sctid>>& label_index() const noexcept {
    return label_index_;
  }

 private:
  std::vector<Concept> concepts_;
  std::vector<IsA> edges_;
  std::unordered_map<Sctid, std::size_t> position_;
  std::vector<std::vector<Sctid>> parents_;
  std::vector<std::vector<Sctid>> children_;
  std::unordered_map<std::string, std::vector<Sctid>> label_index_;
};

inline std::vector<Concept> load_concepts(const std::string& path) {
  std::vector<Concept> out;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) reader.fail("expected 3 tab-separated columns, got " + std::to_string(cols.size()));
    auto id = Sctid::parse(cols[0]);
    if (!id) reader.fail("invalid sctid '" + std::string(cols[0]) + "'");
    Concept c{*id, {}, std::string(cols[2])};
    for (auto label : split(cols[1], '|')) {
      if (label.empty()) reader.fail("empty label for sctid " + id->str());
      c.labels.emplace_back(label);
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<IsA> load_edges(const std::string& path) {
  std::vector<IsA> out;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2) reader.fail("expected 2 tab-separated columns, got " + std::to_string(cols.size()));
    auto child = Sctid::parse(cols[0]);
    auto parent = Sctid::parse(cols[1]);
    if (!child || !parent) reader.fail("invalid sctid in edge row");
    out.push_back({*child, *parent});
  }
  return out;
}

/// Loads concepts.tsv and edges.tsv into a validated graph.
inline ConceptGraph load_graph(const std::string& concepts_path, const std::string& edges_path) {
  return ConceptGraph(load_concepts(concepts_path), load_edges(edges_path));
}

/// Writes the graph back out in canonical (ascending) order.
inline void save_graph(const ConceptGraph& g, const std::string& concepts_path, const std::string& edges_path) {
  std::string c;
  for (const auto& concept_ : g.concepts()) {
    c += concept_.sctid.str();
    c += '\t';
    for (std::size_t i = 0; i < concept_.labels.size(); ++i) {
      if (i) c += '|';
      c += concept_.labels[i];
    }
    c += '\t';
    c += concept_.semantic_tag;
    c += '\n';
  }
  write_file(concepts_path, c);
  std::string e;
  for (const auto& edge : g.edges()) e += edge.child.str() + '\t' + edge.parent.str() + '\n';
  write_file(edges_path, e);
}

}  // namespace medlink
