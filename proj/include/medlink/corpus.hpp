#pragma once

// Mention corpora in the six-column TSV schema, and Stratified / Zero-Shot
// train/dev/test split generation.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "medlink/error.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/random.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

struct Mention {
  std::int64_t id = 0;
  std::string term;
  Sctid general;
  Sctid specific;
  std::string example;
  std::string subreddit;
  // False when the example sentence paraphrases rather than quotes the term.
  bool term_in_example = true;

  Sctid gold(Level level) const { return level == Level::General ? general : specific; }
};

inline constexpr std::string_view kCorpusHeader = "ID\tTerm\tGeneral SCTID\tSpecific SCTID\tExample\tSubreddit";

inline std::vector<Mention> load_corpus(const std::string& path) {
  std::vector<Mention> out;
  std::unordered_set<std::int64_t> seen;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (reader.line_no() == 1 && line.rfind("ID\t", 0) == 0) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 6) reader.fail("expected 6 tab-separated columns, got " + std::to_string(cols.size()));
    Mention m;
    auto id = parse_int<std::int64_t>(cols[0]);
    if (!id) reader.fail("invalid mention id '" + std::string(cols[0]) + "'");
    m.id = *id;
    if (!seen.insert(m.id).second) throw ValidationError("duplicate mention id " + std::to_string(m.id));
    m.term = cols[1];
    auto general = Sctid::parse(cols[2]);
    auto specific = Sctid::parse(cols[3]);
    if (!general || !specific) reader.fail("invalid sctid");
    m.general = *general;
    m.specific = *specific;
    m.example = cols[4];
    m.subreddit = cols[5];
    if (m.term.empty()) reader.fail("empty term");
    if (m.example.empty()) reader.fail("empty example");
    m.term_in_example = contains_folded(m.example, m.term);
    out.push_back(std::move(m));
  }
  return out;
}

inline std::string format_corpus(const std::vector<Mention>& mentions) {
  std::string out(kCorpusHeader);
  out += '\n';
  for (const auto& m : mentions) {
    out += std::to_string(m.id) + '\t' + m.term + '\t' + m.general.str() + '\t' + m.specific.str() + '\t' +
           m.example + '\t' + m.subreddit + '\n';
  }
  return out;
}

inline void save_corpus(const std::vector<Mention>& mentions, const std::string& path) {
  write_file(path, format_corpus(mentions));
}

/// Rejects mentions whose gold concepts are missing from the graph.
inline void validate_corpus(const std::vector<Mention>& mentions, const ConceptGraph& g) {
  for (const auto& m : mentions) {
    for (auto id : {m.general, m.specific})
      if (!g.contains(id))
        throw ValidationError("mention " + std::to_string(m.id) + " references unknown sctid " + id.str());
  }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class SplitKind { Stratified, ZeroShot };

inline std::string_view to_string(SplitKind kind) {
  return kind == SplitKind::Stratified ? "stratified" : "zero-shot";
}

inline std::optional<SplitKind> parse_split_kind(std::string_view text) {
  if (text == "stratified") return SplitKind::Stratified;
  if (text == "zero-shot" || text == "zeroshot") return SplitKind::ZeroShot;
  return std::nullopt;
}

struct SplitRatios {
  double train = 0.675;
  double dev = 0.11;
  double test = 0.215;

  std::array<double, 3> as_array() const { return {train, dev, test}; }

  void validate() const {
    if (!(train > 0 && dev > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + dev + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }
};

struct CorpusSplit {
  Level level = Level::General;
  SplitKind kind = SplitKind::Stratified;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::vector<Mention> train;
  std::vector<Mention> dev;
  std::vector<Mention> test;
};

namespace detail {

// Partition index with the largest remaining deficit against its target size;
// ties go to the lowest index (train, then dev, then test).
inline std::size_t neediest(const std::array<double, 3>& target, const std::array<std::size_t, 3>& count) {
  std::size_t best = 0;
  double best_deficit = target[0] - static_cast<double>(count[0]);
  for (std::size_t k = 1; k < 3; ++k) {
    const double deficit = target[k] - static_cast<double>(count[k]);
    if (deficit > best_deficit) best = k, best_deficit = deficit;
  }
  return best;
}

}  // namespace detail

/// Partitions mentions so that Stratified splits cover every dev/test gold
/// concept in train and ZeroShot splits share no gold concept between train
/// and dev/test. The result depends only on the arguments.
inline CorpusSplit make_split(const std::vector<Mention>& mentions, Level level, SplitKind kind,
                              SplitRatios ratios, std::uint64_t seed) {
  ratios.validate();
  {
    std::unordered_set<std::int64_t> ids;
    for (const auto& m : mentions)
      if (!ids.insert(m.id).second) throw ValidationError("duplicate mention id " + std::to_string(m.id));
  }

  // Groups keyed by gold concept; members kept in input order before shuffling.
  std::map<Sctid, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < mentions.size(); ++i) groups[mentions[i].gold(level)].push_back(i);

  std::vector<std::vector<std::size_t>> order;
  order.reserve(groups.size());
  for (auto& [id, members] : groups) order.push_back(std::move(members));

  Rng rng(seed);
  rng.shuffle(std::span(order));
  for (auto& members : order) rng.shuffle(std::span(members));

  const auto n = static_cast<double>(mentions.size());
  const auto r = ratios.as_array();
  const std::array<double, 3> target{r[0] * n, r[1] * n, r[2] * n};
  std::array<std::vector<std::size_t>, 3> parts;
  std::array<std::size_t, 3> count{0, 0, 0};

  if (kind == SplitKind::Stratified) {
    if (mentions.size() <= order.size())
      throw InfeasibleError("stratified split needs at least one concept with two or more mentions");
    for (const auto& members : order) {
      parts[0].push_back(members.front());
      ++count[0];
    }
    for (const auto& members : order) {
      for (std::size_t j = 1; j < members.size(); ++j) {
        const auto k = detail::neediest(target, count);
        parts[k].push_back(members[j]);
        ++count[k];
      }
    }
  } else {
    if (order.size() < 3)
      throw InfeasibleError("zero-shot split needs at least three distinct concepts");
    for (const auto& members : order) {
      const auto k = detail::neediest(target, count);
      for (auto i : members) parts[k].push_back(i);
      count[k] += members.size();
    }
  }

  CorpusSplit split{level, kind, ratios, seed, {}, {}, {}};
  std::array<std::vector<Mention>*, 3> dst{&split.train, &split.dev, &split.test};
  for (std::size_t k = 0; k < 3; ++k) {
    std::sort(parts[k].begin(), parts[k].end(),
              [&](std::size_t a, std::size_t b) { return mentions[a].id < mentions[b].id; });
    for (auto i : parts[k]) dst[k]->push_back(mentions[i]);
  }
  return split;
}

struct PartitionStats {
  std::size_t mentions = 0;
  std::size_t concepts = 0;
};

struct SplitStats {
  PartitionStats train, dev, test;
  // Fraction of distinct dev/test gold concepts that also occur in train.
  double dev_concept_coverage = 0.0;
  double test_concept_coverage = 0.0;
  // Fraction of test mentions whose folded surface form occurs in train.
  double test_surface_coverage = 0.0;
};

inline SplitStats split_stats(const CorpusSplit& split) {
  auto concepts_of = [&](const std::vector<Mention>& ms) {
    std::set<Sctid> out;
    for (const auto& m : ms) out.insert(m.gold(split.level));
    return out;
  };
  const auto train_c = concepts_of(split.train);
  const auto dev_c = concepts_of(split.dev);
  const auto test_c = concepts_of(split.test);

  auto coverage = [&](const std::set<Sctid>& cs) {
    if (cs.empty()) return 0.0;
    std::size_t hit = 0;
    for (auto id : cs) hit += train_c.contains(id);
    return static_cast<double>(hit) / static_cast<double>(cs.size());
  };

  std::unordered_set<std::string> train_terms;
  for (const auto& m : split.train) train_terms.insert(fold_case(m.term));
  std::size_t surface_hits = 0;
  for (const auto& m : split.test) surface_hits += train_terms.contains(fold_case(m.term));

  SplitStats s;
  s.train = {split.train.size(), train_c.size()};
  s.dev = {split.dev.size(), dev_c.size()};
  s.test = {split.test.size(), test_c.size()};
  s.dev_concept_coverage = coverage(dev_c);
  s.test_concept_coverage = coverage(test_c);
  s.test_surface_coverage =
      split.test.empty() ? 0.0 : static_cast<double>(surface_hits) / static_cast<double>(split.test.size());
  return s;
}

/// Writes train.tsv, dev.tsv, test.tsv and split.meta into `dir`.
inline void save_split(const CorpusSplit& split, const std::string& dir, const std::string& input_checksum) {
  save_corpus(split.train, dir + "/train.tsv");
  save_corpus(split.dev, dir + "/dev.tsv");
  save_corpus(split.test, dir + "/test.tsv");
  std::string meta;
  meta += "kind=" + std::string(to_string(split.kind)) + '\n';
  meta += "level=" + std::string(to_string(split.level)) + '\n';
  meta += "seed=" + std::to_string(split.seed) + '\n';
  meta += "ratios=" + format_double(split.ratios.train) + ',' + format_double(split.ratios.dev) + ',' +
          format_double(split.ratios.test) + '\n';
  meta += "input_checksum=" + input_checksum + '\n';
  meta += "train=" + std::to_string(split.train.size()) + '\n';
  meta += "dev=" + std::to_string(split.dev.size()) + '\n';
  meta += "test=" + std::to_string(split.test.size()) + '\n';
  write_file(dir + "/split.meta", meta);
}

}  // namespace medlink
