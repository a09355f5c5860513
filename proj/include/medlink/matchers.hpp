#pragma once

// Surface-form linkers: the training-set dictionary, exact label lookup and
// thresholded fuzzy matching over every label in the graph.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "medlink/corpus.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/string_metrics.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

enum class Method { Dictionary, Exact, Levenshtein, Stoilos, Neural };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Dictionary: return "dictionary";
    case Method::Exact: return "exact";
    case Method::Levenshtein: return "lev";
    case Method::Stoilos: return "stoilos";
    case Method::Neural: return "neural";
  }
  return "?";
}

/// Outcome of one linker. A miss carries neither concept nor score.
struct MatchResult {
  std::optional<Sctid> sctid;
  double score = 0.0;  // distance for fuzzy matchers, 0 for exact hits
  Method method = Method::Dictionary;

  bool hit() const noexcept { return sctid.has_value(); }

  static MatchResult miss(Method m) { return {std::nullopt, 0.0, m}; }
};

// ---------------------------------------------------------------------------
// Dictionary
// ---------------------------------------------------------------------------

class Dictionary {
 public:
  struct Entry {
    Sctid sctid;
    std::size_t support = 0;
  };

  Dictionary() = default;

  /// Most frequent gold concept per case-folded training term; frequency
  /// ties go to the smaller sctid. Terms that fold to the empty string are
  /// skipped and counted.
  static Dictionary build(const std::vector<Mention>& train, Level level) {
    std::unordered_map<std::string, std::map<Sctid, std::size_t>> counts;
    Dictionary d;
    for (const auto& m : train) {
      auto key = fold_case(m.term);
      if (key.empty()) {
        ++d.skipped_;
        continue;
      }
      ++counts[std::move(key)][m.gold(level)];
    }
    for (auto& [term, per_concept] : counts) {
      Entry best{};
      for (const auto& [id, n] : per_concept)
        if (n > best.support) best = {id, n};  // map order: first max has the smallest sctid
      d.entries_.emplace(term, best);
    }
    return d;
  }

  MatchResult lookup(std::string_view term) const {
    auto it = entries_.find(fold_case(term));
    if (it == entries_.end()) return MatchResult::miss(Method::Dictionary);
    return {it->second.sctid, 0.0, Method::Dictionary};
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t skipped() const noexcept { return skipped_; }
  const std::unordered_map<std::string, Entry>& entries() const noexcept { return entries_; }

  /// `term<TAB>sctid<TAB>support`, sorted by term.
  void save(const std::string& path) const {
    std::vector<const std::pair<const std::string, Entry>*> rows;
    rows.reserve(entries_.size());
    for (const auto& kv : entries_) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
    std::string out;
    for (auto* r : rows) out += r->first + '\t' + r->second.sctid.str() + '\t' + std::to_string(r->second.support) + '\n';
    write_file(path, out);
  }

  static Dictionary load(const std::string& path) {
    Dictionary d;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
      if (line.empty()) continue;
      const auto cols = split(line, '\t');
      if (cols.size() != 3) reader.fail("expected 3 tab-separated columns");
      auto id = Sctid::parse(cols[1]);
      auto support = parse_int<std::size_t>(cols[2]);
      if (!id || !support) reader.fail("invalid dictionary row");
      if (!d.entries_.emplace(std::string(cols[0]), Entry{*id, *support}).second)
        throw ValidationError("duplicate dictionary term '" + std::string(cols[0]) + "'");
    }
    return d;
  }

 private:
  std::unordered_map<std::string, Entry> entries_;
  std::size_t skipped_ = 0;
};

inline Dictionary build_dictionary(const std::vector<Mention>& train, Level level) {
  return Dictionary::build(train, level);
}

inline MatchResult dictionary_lookup(const Dictionary& d, std::string_view term) { return d.lookup(term); }

// ---------------------------------------------------------------------------
// Exact and fuzzy label matching
// ---------------------------------------------------------------------------

/// Case-folded label equality; ties resolve to the smallest owning sctid.
inline MatchResult exact_match(const ConceptGraph& g, std::string_view term) {
  const auto& owners = g.lookup_label(term);
  if (owners.empty()) return MatchResult::miss(Method::Exact);
  return {owners.front(), 0.0, Method::Exact};
}

enum class Metric { LevenshteinRatio, StoilosDistance };

inline std::string_view to_string(Metric m) { return m == Metric::LevenshteinRatio ? "lev" : "stoilos"; }

inline std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "lev" || text == "levenshtein") return Metric::LevenshteinRatio;
  if (text == "stoilos") return Metric::StoilosDistance;
  return std::nullopt;
}

inline Method method_of(Metric m) { return m == Metric::LevenshteinRatio ? Method::Levenshtein : Method::Stoilos; }

/// Closest label found by a scan.
struct LabelCandidate {
  double distance = 0.0;
  Sctid sctid;
  std::size_t label_index = 0;  // position within the concept's label list
};

/// Flat table of case-folded, decoded labels in (sctid, label order) order,
/// scanned linearly by the fuzzy matchers.
class LabelScanner {
 public:
  explicit LabelScanner(const ConceptGraph& g, StoilosParams params = {}) : params_(params) {
    params_.validate();
    for (const auto& c : g.concepts())
      for (std::size_t i = 0; i < c.labels.size(); ++i) rows_.push_back({c.sctid, i, fold_case(utf8_decode(c.labels[i]))});
  }

  std::size_t size() const noexcept { return rows_.size(); }
  const StoilosParams& params() const noexcept { return params_; }

  double distance(Metric metric, std::u32string_view a, std::u32string_view b) const {
    return metric == Metric::LevenshteinRatio ? levenshtein_ratio(a, b) : stoilos_distance(a, b, params_);
  }

  /// Globally closest label. Ties: smaller distance, then smaller sctid,
  /// then earlier label; scan order realises this, so only strict
  /// improvements replace the incumbent. `bound` discards labels that cannot
  /// come within it; `prefilter` enables the Levenshtein length bound, which
  /// skips only labels already known to be worse than the incumbent or bound.
  std::optional<LabelCandidate> nearest(std::string_view term, Metric metric, double bound = 1.0,
                                        bool prefilter = true) const {
    const auto query = fold_case(utf8_decode(term));
    std::optional<LabelCandidate> best;
    for (const auto& row : rows_) {
      const double limit = best ? std::min(bound, best->distance) : bound;
      if (prefilter && metric == Metric::LevenshteinRatio) {
        const auto longest = std::max(query.size(), row.label.size());
        if (longest > 0) {
          const auto gap = query.size() > row.label.size() ? query.size() - row.label.size() : row.label.size() - query.size();
          if (static_cast<double>(gap) / static_cast<double>(longest) > limit) continue;
        }
      }
      const double d = distance(metric, query, row.label);
      if (!best || d < best->distance) {
        best = LabelCandidate{d, row.sctid, row.label_index};
        if (d == 0.0) break;
      }
    }
    return best;
  }

  /// Nearest label's concept if its distance is within tau, otherwise a miss.
  MatchResult match(std::string_view term, Metric metric, double tau, bool prefilter = true) const {
    auto best = nearest(term, metric, tau, prefilter);
    if (!best || best->distance > tau) return MatchResult::miss(method_of(metric));
    return {best->sctid, best->distance, method_of(metric)};
  }

 private:
  struct Row {
    Sctid sctid;
    std::size_t label_index;
    std::u32string label;
  };
  StoilosParams params_;
  std::vector<Row> rows_;
};

inline MatchResult fuzzy_match(const ConceptGraph& g, std::string_view term, Metric metric, double tau) {
  return LabelScanner(g).match(term, metric, tau);
}

inline std::vector<double> default_grid(Metric metric) {
  std::vector<double> grid;
  if (metric == Metric::LevenshteinRatio) {
    for (int i = 10; i <= 20; ++i) grid.push_back(i / 100.0);
  } else {
    for (int i = 50; i <= 100; i += 5) grid.push_back(i / 1000.0);
  }
  return grid;
}

struct TuneResult {
  double tau = 0.0;
  double acc1 = 0.0;
  std::vector<double> accuracy;  // one entry per grid value
};

/// Grid value maximising dev Acc@1 of the fuzzy matcher; ties go to the
/// smallest tau. The nearest label does not depend on tau, so each dev
/// mention is scanned once.
inline TuneResult tune_threshold(const LabelScanner& scanner, const std::vector<Mention>& dev, Level level,
                                 Metric metric, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  for (double t : grid)
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold grid values must lie in [0, 1]");
  std::sort(grid.begin(), grid.end());

  std::vector<std::optional<LabelCandidate>> nearest;
  nearest.reserve(dev.size());
  for (const auto& m : dev) nearest.push_back(scanner.nearest(m.term, metric));

  TuneResult out;
  out.tau = grid.front();
  out.acc1 = -1.0;
  for (double tau : grid) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < dev.size(); ++i)
      hits += nearest[i] && nearest[i]->distance <= tau && nearest[i]->sctid == dev[i].gold(level);
    const double acc = dev.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(dev.size());
    out.accuracy.push_back(acc);
    if (acc > out.acc1) out.acc1 = acc, out.tau = tau;
  }
  return out;
}

inline double tune_threshold(const ConceptGraph& g, const std::vector<Mention>& dev, Level level, Metric metric,
                             std::vector<double> grid) {
  return tune_threshold(LabelScanner(g), dev, level, metric, std::move(grid)).tau;
}

}  // namespace medlink
