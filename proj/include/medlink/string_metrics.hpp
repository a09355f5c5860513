#pragma once

// Surface-distance kernels over Unicode scalar values: Levenshtein distance
// and ratio, Jaro-Winkler, and the Stoilos similarity
// (commonality - difference + Jaro-Winkler).
//
// UTF-8 overloads decode first; callers matching one term against many labels
// should decode once and use the u32 overloads.

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "medlink/error.hpp"
#include "medlink/text.hpp"

namespace medlink {

struct StoilosParams {
  double hamacher_p = 0.6;
  std::size_t min_substring_len = 3;
  double winkler_prefix_scale = 0.1;
  std::size_t winkler_max_prefix = 4;

  void validate() const {
    if (!(hamacher_p > 0.0 && hamacher_p <= 1.0)) throw ConfigError("hamacher_p must lie in (0, 1]");
    if (min_substring_len < 1) throw ConfigError("min_substring_len must be >= 1");
    if (!(winkler_prefix_scale >= 0.0 && winkler_prefix_scale <= 0.25))
      throw ConfigError("winkler_prefix_scale must lie in [0, 0.25]");
  }
};

// ---------------------------------------------------------------------------
// Levenshtein
// ---------------------------------------------------------------------------

inline std::size_t levenshtein(std::u32string_view x, std::u32string_view y) {
  if (x.size() < y.size()) std::swap(x, y);
  if (y.empty()) return x.size();
  std::vector<std::size_t> row(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (x[i - 1] == y[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[y.size()];
}

/// Lev(x, y) / max(|x|, |y|). Two empty strings give 0.
inline double levenshtein_ratio(std::u32string_view x, std::u32string_view y) {
  const auto longest = std::max(x.size(), y.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(x, y)) / static_cast<double>(longest);
}

inline std::size_t levenshtein(std::string_view x, std::string_view y) {
  return levenshtein(utf8_decode(x), utf8_decode(y));
}

inline double levenshtein_ratio(std::string_view x, std::string_view y) {
  return levenshtein_ratio(utf8_decode(x), utf8_decode(y));
}

// ---------------------------------------------------------------------------
// Jaro-Winkler
// ---------------------------------------------------------------------------

namespace detail {

inline double jaro_ordered(std::u32string_view a, std::u32string_view b) {
  const std::size_t window = std::max(a.size(), b.size()) / 2;
  const std::size_t reach = window > 0 ? window - 1 : 0;
  std::vector<bool> a_matched(a.size(), false), b_matched(b.size(), false);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t lo = i > reach ? i - reach : 0;
    const std::size_t hi = std::min(b.size(), i + reach + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (!b_matched[j] && a[i] == b[j]) {
        a_matched[i] = b_matched[j] = true;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t half_transpositions = 0;
  for (std::size_t i = 0, j = 0; i < a.size(); ++i) {
    if (!a_matched[i]) continue;
    while (!b_matched[j]) ++j;
    if (a[i] != b[j]) ++half_transpositions;
    ++j;
  }
  const double m = static_cast<double>(matches);
  const double t = static_cast<double>(half_transpositions / 2);
  return (m / static_cast<double>(a.size()) + m / static_cast<double>(b.size()) + (m - t) / m) / 3.0;
}

}  // namespace detail

/// Jaro similarity with Winkler's common-prefix boost. The greedy matching
/// pass is run on the lexicographically smaller string first so the result is
/// exactly symmetric. Two empty strings score 1; one empty string scores 0.
inline double jaro_winkler(std::u32string_view x, std::u32string_view y, const StoilosParams& params = {}) {
  if (x.empty() && y.empty()) return 1.0;
  if (x.empty() || y.empty()) return 0.0;
  if (y < x) std::swap(x, y);
  const double jaro = detail::jaro_ordered(x, y);
  std::size_t prefix = 0;
  const std::size_t cap = std::min({params.winkler_max_prefix, x.size(), y.size()});
  while (prefix < cap && x[prefix] == y[prefix]) ++prefix;
  return jaro + static_cast<double>(prefix) * params.winkler_prefix_scale * (1.0 - jaro);
}

inline double jaro_winkler(std::string_view x, std::string_view y, const StoilosParams& params = {}) {
  return jaro_winkler(utf8_decode(x), utf8_decode(y), params);
}

// ---------------------------------------------------------------------------
// Stoilos
// ---------------------------------------------------------------------------

struct Commonality {
  double comm = 0.0;
  std::u32string unmatched_x;
  std::u32string unmatched_y;
};

struct CommonSubstring {
  std::size_t x_start = 0;
  std::size_t y_start = 0;
  std::size_t length = 0;
};

/// Longest common substring. Among equally long candidates the one starting
/// earliest in x wins, then earliest in y.
inline CommonSubstring longest_common_substring(std::u32string_view x, std::u32string_view y) {
  CommonSubstring best;
  if (x.empty() || y.empty()) return best;
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j) {
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : 0;
      if (cur[j] > best.length) best = {i - cur[j], j - cur[j], cur[j]};
    }
    std::swap(prev, cur);
  }
  return best;
}

namespace detail {

inline Commonality commonality_ordered(std::u32string_view x, std::u32string_view y, const StoilosParams& params) {
  Commonality out{0.0, std::u32string(x), std::u32string(y)};
  const std::size_t total = x.size() + y.size();
  if (x == y) {
    out.comm = 1.0;
    out.unmatched_x.clear();
    out.unmatched_y.clear();
    return out;
  }
  std::size_t matched = 0;
  while (true) {
    const auto lcs = longest_common_substring(out.unmatched_x, out.unmatched_y);
    if (lcs.length < params.min_substring_len || lcs.length == 0) break;
    matched += lcs.length;
    out.unmatched_x.erase(lcs.x_start, lcs.length);
    out.unmatched_y.erase(lcs.y_start, lcs.length);
  }
  out.comm = total == 0 ? 0.0 : 2.0 * static_cast<double>(matched) / static_cast<double>(total);
  return out;
}

}  // namespace detail

/// Iteratively strips the longest common substring (of length at least
/// min_substring_len) from both strings. comm = 2 * matched / (|x| + |y|),
/// in [0, 1]. Identical strings (including two empty strings) match whole.
inline Commonality stoilos_commonality(std::u32string_view x, std::u32string_view y,
                                       const StoilosParams& params = {}) {
  if (y < x) {
    auto swapped = detail::commonality_ordered(y, x, params);
    std::swap(swapped.unmatched_x, swapped.unmatched_y);
    return swapped;
  }
  return detail::commonality_ordered(x, y, params);
}

/// Hamacher product of the residual lengths, each normalised by its original
/// string length (an empty original contributes 0).
inline double stoilos_difference(std::u32string_view unmatched_x, std::u32string_view unmatched_y,
                                 std::u32string_view orig_x, std::u32string_view orig_y,
                                 const StoilosParams& params = {}) {
  const double ux = orig_x.empty() ? 0.0 : static_cast<double>(unmatched_x.size()) / static_cast<double>(orig_x.size());
  const double uy = orig_y.empty() ? 0.0 : static_cast<double>(unmatched_y.size()) / static_cast<double>(orig_y.size());
  const double p = params.hamacher_p;
  const double prod = ux * uy;
  return prod / (p + (1.0 - p) * (ux + uy - prod));
}

struct StoilosBreakdown {
  double comm = 0.0;
  double diff = 0.0;
  double winkler = 0.0;

  double similarity() const { return comm - diff + winkler; }
};

inline StoilosBreakdown stoilos_breakdown(std::u32string_view x, std::u32string_view y,
                                          const StoilosParams& params = {}) {
  const auto c = stoilos_commonality(x, y, params);
  return {c.comm, stoilos_difference(c.unmatched_x, c.unmatched_y, x, y, params), jaro_winkler(x, y, params)};
}

/// comm - diff + jaro_winkler, in [-1, 2].
inline double stoilos_similarity(std::u32string_view x, std::u32string_view y, const StoilosParams& params = {}) {
  return stoilos_breakdown(x, y, params).similarity();
}

/// (2 - similarity) / 3: 0 for identical strings, 1 at minimal similarity.
inline double stoilos_distance(std::u32string_view x, std::u32string_view y, const StoilosParams& params = {}) {
  return std::clamp((2.0 - stoilos_similarity(x, y, params)) / 3.0, 0.0, 1.0);
}

inline Commonality stoilos_commonality(std::string_view x, std::string_view y, const StoilosParams& params = {}) {
  return stoilos_commonality(utf8_decode(x), utf8_decode(y), params);
}

inline double stoilos_difference(std::string_view ux, std::string_view uy, std::string_view x, std::string_view y,
                                 const StoilosParams& params = {}) {
  return stoilos_difference(utf8_decode(ux), utf8_decode(uy), utf8_decode(x), utf8_decode(y), params);
}

inline StoilosBreakdown stoilos_breakdown(std::string_view x, std::string_view y, const StoilosParams& params = {}) {
  return stoilos_breakdown(utf8_decode(x), utf8_decode(y), params);
}

inline double stoilos_similarity(std::string_view x, std::string_view y, const StoilosParams& params = {}) {
  return stoilos_similarity(utf8_decode(x), utf8_decode(y), params);
}

inline double stoilos_distance(std::string_view x, std::string_view y, const StoilosParams& params = {}) {
  return stoilos_distance(utf8_decode(x), utf8_decode(y), params);
}

}  // namespace medlink
