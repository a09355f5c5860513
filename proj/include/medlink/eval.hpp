#pragma once

// Prediction files, Acc@1 / Acc@10 / MRR scoring, and report rendering.

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "medlink/corpus.hpp"
#include "medlink/error.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

/// One candidate line: `mention_id<TAB>rank<TAB>sctid<TAB>score<TAB>provenance`.
struct PredictionRow {
  std::int64_t mention_id = 0;
  std::size_t rank = 1;  // 1-based
  Sctid sctid;
  double score = 0.0;
  std::string provenance;
};

inline std::string format_prediction(const PredictionRow& r) {
  return std::to_string(r.mention_id) + '\t' + std::to_string(r.rank) + '\t' + r.sctid.str() + '\t' +
         format_double(r.score) + '\t' + r.provenance + '\n';
}

inline void save_predictions(std::span<const PredictionRow> rows, const std::string& path) {
  std::string out;
  for (const auto& r : rows) out += format_prediction(r);
  write_file(path, out);
}

inline std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::vector<PredictionRow> out;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 5) reader.fail("expected 5 tab-separated columns, got " + std::to_string(cols.size()));
    PredictionRow r;
    auto id = parse_int<std::int64_t>(cols[0]);
    auto rank = parse_int<std::size_t>(cols[1]);
    auto sctid = Sctid::parse(cols[2]);
    auto score = parse_double(cols[3]);
    if (!id) reader.fail("invalid mention id");
    if (!rank || *rank == 0) reader.fail("rank must be a positive integer");
    if (!sctid) reader.fail("invalid sctid");
    if (!score) reader.fail("invalid score");
    r.mention_id = *id;
    r.rank = *rank;
    r.sctid = *sctid;
    r.score = *score;
    r.provenance = cols[4];
    out.push_back(std::move(r));
  }
  return out;
}

/// Deepest rank that counts: hits below it score 0 in every metric.
inline constexpr std::size_t kMaxRank = 10;

struct EvalReport {
  std::size_t n = 0;
  std::size_t missing = 0;  // gold mentions with no prediction rows
  double acc1 = 0.0;
  double acc10 = 0.0;
  double mrr = 0.0;
};

/// Rank of the first candidate equal to the gold concept (0 = not found).
inline std::vector<std::size_t> first_hit_ranks(std::span<const PredictionRow> rows, const std::vector<Mention>& gold,
                                                Level level, std::size_t* missing = nullptr) {
  std::unordered_map<std::int64_t, std::vector<const PredictionRow*>> by_mention;
  for (const auto& r : rows) by_mention[r.mention_id].push_back(&r);
  std::vector<std::size_t> ranks;
  ranks.reserve(gold.size());
  std::size_t absent = 0;
  for (const auto& m : gold) {
    auto it = by_mention.find(m.id);
    if (it == by_mention.end()) {
      ++absent;
      ranks.push_back(0);
      continue;
    }
    auto cands = it->second;
    std::stable_sort(cands.begin(), cands.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    std::size_t hit = 0;
    for (auto* c : cands)
      if (c->sctid == m.gold(level)) {
        hit = c->rank;
        break;
      }
    ranks.push_back(hit);
  }
  if (missing) *missing = absent;
  return ranks;
}

/// Acc@1, Acc@10 and MRR of predictions against the gold level. The
/// reciprocal rank is taken within the top kMaxRank candidates, so a first
/// hit deeper than that scores 0. Mentions without predictions count as
/// misses.
inline EvalReport score(std::span<const PredictionRow> rows, const std::vector<Mention>& gold, Level level) {
  EvalReport r;
  const auto ranks = first_hit_ranks(rows, gold, level, &r.missing);
  r.n = gold.size();
  if (r.n == 0) return r;
  double top1 = 0, top10 = 0, rr = 0;
  for (auto k : ranks) {
    if (k == 0 || k > kMaxRank) continue;
    top1 += k == 1;
    top10 += 1;
    rr += 1.0 / static_cast<double>(k);
  }
  const auto n = static_cast<double>(r.n);
  r.acc1 = top1 / n;
  r.acc10 = top10 / n;
  r.mrr = rr / n;
  return r;
}

inline EvalReport score(const std::string& predictions_path, const std::vector<Mention>& gold, Level level) {
  return score(load_predictions(predictions_path), gold, level);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class TableFormat { Text, Csv };

inline std::optional<TableFormat> parse_table_format(std::string_view s) {
  if (s == "text") return TableFormat::Text;
  if (s == "csv") return TableFormat::Csv;
  return std::nullopt;
}

/// Methods x splits grid of reports; both axes keep insertion order.
class ReportTable {
 public:
  void add(const std::string& method, const std::string& split, const EvalReport& report) {
    if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
    if (std::find(splits_.begin(), splits_.end(), split) == splits_.end()) splits_.push_back(split);
    cells_[{method, split}] = report;
  }

  bool empty() const noexcept { return methods_.empty(); }
  const std::vector<std::string>& methods() const noexcept { return methods_; }
  const std::vector<std::string>& splits() const noexcept { return splits_; }

  const EvalReport* find(const std::string& method, const std::string& split) const {
    auto it = cells_.find({method, split});
    return it == cells_.end() ? nullptr : &it->second;
  }

  /// Two-decimal table, values rounded half-up.
  std::string render(TableFormat format) const {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"method"};
    for (const auto& s : splits_)
      for (auto metric : {"Acc@1", "Acc@10", "MRR"}) header.push_back(splits_.size() > 1 ? s + " " + metric : metric);
    grid.push_back(header);
    for (const auto& m : methods_) {
      std::vector<std::string> row{m};
      for (const auto& s : splits_) {
        const auto* r = find(m, s);
        for (int k = 0; k < 3; ++k) {
          if (!r) {
            row.emplace_back("-");
            continue;
          }
          const double v = k == 0 ? r->acc1 : k == 1 ? r->acc10 : r->mrr;
          row.push_back(format_fixed_half_up(v, 2));
        }
      }
      grid.push_back(std::move(row));
    }
    std::string out;
    if (format == TableFormat::Csv) {
      for (const auto& row : grid) {
        for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
        out += '\n';
      }
      return out;
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : grid)
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    for (const auto& row : grid) {
      std::string line;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) line += "  ";
        const auto pad = width[c] - row[c].size();
        line += c == 0 ? row[c] + std::string(pad, ' ') : std::string(pad, ' ') + row[c];
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> methods_;
  std::vector<std::string> splits_;
  std::map<std::pair<std::string, std::string>, EvalReport> cells_;
};

inline std::string report_table(const ReportTable& table, TableFormat format) { return table.render(format); }

/// Full-precision `key=value` block for one report, blank-line terminated.
inline std::string machine_report(const std::string& method, const std::string& split, Level level,
                                  const EvalReport& r) {
  std::string out;
  out += "method=" + method + '\n';
  out += "split=" + split + '\n';
  out += "level=" + std::string(to_string(level)) + '\n';
  out += "n=" + std::to_string(r.n) + '\n';
  out += "missing=" + std::to_string(r.missing) + '\n';
  out += "acc1=" + format_double(r.acc1) + '\n';
  out += "acc10=" + format_double(r.acc10) + '\n';
  out += "mrr=" + format_double(r.mrr) + '\n';
  out += '\n';
  return out;
}

}  // namespace medlink
