#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medlink {

/// SNOMED CT identifier. Ordered numerically; rendered as a decimal string.
struct Sctid {
  std::uint64_t value = 0;

  constexpr auto operator<=>(const Sctid&) const = default;

  std::string str() const { return std::to_string(value); }

  static std::optional<Sctid> parse(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return Sctid{v};
  }
};

using Vector = std::vector<double>;

/// Annotation level a gold concept is taken from.
enum class Level { General, Specific };

inline std::string_view to_string(Level level) {
  return level == Level::General ? "general" : "specific";
}

inline std::optional<Level> parse_level(std::string_view text) {
  if (text == "general") return Level::General;
  if (text == "specific") return Level::Specific;
  return std::nullopt;
}

}  // namespace medlink

template <>
struct std::hash<medlink::Sctid> {
  std::size_t operator()(const medlink::Sctid& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
