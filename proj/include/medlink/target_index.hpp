#pragma once

// Concept target vectors and exhaustive cosine top-k ranking.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medlink/error.hpp"
#include "medlink/linalg.hpp"
#include "medlink/types.hpp"

namespace medlink {

/// One target vector per concept, ascending sctid, with unit-length copies
/// cached for scoring.
class ConceptTargetIndex {
 public:
  ConceptTargetIndex() = default;

  ConceptTargetIndex(std::size_t dim, std::vector<std::pair<Sctid, Vector>> targets) : dim_(dim) {
    std::sort(targets.begin(), targets.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto& [id, v] = targets[i];
      if (v.size() != dim) throw ConfigError("target for " + id.str() + " has dimension " + std::to_string(v.size()) +
                                             ", expected " + std::to_string(dim));
      if (!position_.emplace(id, i).second) throw ValidationError("duplicate target sctid " + id.str());
      ids_.push_back(id);
      unit_.push_back(normalized(v));
      raw_.push_back(std::move(v));
    }
  }

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  Sctid sctid(std::size_t i) const { return ids_[i]; }
  const Vector& target(std::size_t i) const { return raw_[i]; }
  const Vector& unit(std::size_t i) const { return unit_[i]; }

  std::optional<std::size_t> position(Sctid id) const {
    auto it = position_.find(id);
    if (it == position_.end()) return std::nullopt;
    return it->second;
  }

  const Vector& unit_of(Sctid id) const {
    auto p = position(id);
    if (!p) throw NotFoundError("no target for sctid " + id.str());
    return unit_[*p];
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Sctid> ids_;
  std::vector<Vector> raw_;
  std::vector<Vector> unit_;
  std::unordered_map<Sctid, std::size_t> position_;
};

struct ScoredConcept {
  Sctid sctid;
  double score = 0.0;

  bool operator==(const ScoredConcept&) const = default;
};

/// Candidates in non-increasing score order, unique sctids.
struct Ranking {
  std::int64_t mention_id = 0;
  std::vector<ScoredConcept> entries;
};

/// Top-k concepts by cosine between the prediction and each target,
/// computed as the dot product of unit vectors. Ties go to the smaller
/// sctid. A zero prediction scores every concept 0.
inline std::vector<ScoredConcept> rank(const ConceptTargetIndex& index, std::span<const double> prediction,
                                       std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (prediction.size() != index.dim()) throw ConfigError("prediction dimension does not match the target index");
  const auto unit = normalized(prediction);
  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scores[i] = dot(index.unit(i), unit);
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto top = std::min(k, order.size());
  // Index order is ascending sctid, so comparing positions breaks ties.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  std::vector<ScoredConcept> out;
  out.reserve(top);
  for (std::size_t i = 0; i < top; ++i) out.push_back({index.sctid(order[i]), scores[order[i]]});
  return out;
}

}  // namespace medlink
