#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace healthmap {

using ModuleId = std::uint32_t;
using DiagResourceId = std::uint32_t;
using Timestamp = std::uint64_t;  // microseconds since system epoch

// Ordered levels. ZERO means "no fault / no propagation".
enum class Severity : std::uint8_t { kZero = 0, kLow = 1, kMedium = 2, kHigh = 3 };

enum class Persistence : std::uint8_t { kZero = 0, kTransient = 1, kIntermittent = 2, kPermanent = 3 };

enum class ModuleStatus : std::uint8_t {
  kAvailable = 0,
  kOwnFault = 1,
  kPropagatedFault = 2,
  kMaintenance = 3,
};

inline constexpr std::uint8_t kMaxLevel = 3;

template <typename Level>
constexpr Level max_level(Level a, Level b) {
  return static_cast<std::uint8_t>(a) >= static_cast<std::uint8_t>(b) ? a : b;
}

template <typename Level>
constexpr Level min_level(Level a, Level b) {
  return static_cast<std::uint8_t>(a) <= static_cast<std::uint8_t>(b) ? a : b;
}

// Criticality caps severity, so mixing the two scales is allowed in this one place.
constexpr Severity cap_severity(Severity s, Severity criticality) { return min_level(s, criticality); }

namespace detail {
inline constexpr std::array<std::string_view, 4> kSeverityNames{"ZERO", "LOW", "MEDIUM", "HIGH"};
inline constexpr std::array<std::string_view, 4> kPersistenceNames{"ZERO", "TRANSIENT", "INTERMITTENT",
                                                                   "PERMANENT"};
inline constexpr std::array<std::string_view, 4> kStatusNames{"AVAILABLE", "OWN FAULT", "PROPAGATED FAULT",
                                                              "MAINTENANCE"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view text) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  return std::nullopt;
}
}  // namespace detail

constexpr std::string_view to_string(Severity s) { return detail::kSeverityNames[static_cast<std::size_t>(s)]; }
constexpr std::string_view to_string(Persistence p) {
  return detail::kPersistenceNames[static_cast<std::size_t>(p)];
}
constexpr std::string_view to_string(ModuleStatus st) {
  return detail::kStatusNames[static_cast<std::size_t>(st)];
}

inline std::optional<Severity> parse_severity(std::string_view text) {
  return detail::lookup<Severity>(detail::kSeverityNames, text);
}
inline std::optional<Persistence> parse_persistence(std::string_view text) {
  return detail::lookup<Persistence>(detail::kPersistenceNames, text);
}

inline std::optional<Severity> severity_from_byte(std::uint8_t b) {
  if (b > kMaxLevel) return std::nullopt;
  return static_cast<Severity>(b);
}
inline std::optional<Persistence> persistence_from_byte(std::uint8_t b) {
  if (b > kMaxLevel) return std::nullopt;
  return static_cast<Persistence>(b);
}
inline std::optional<ModuleStatus> status_from_byte(std::uint8_t b) {
  if (b > kMaxLevel) return std::nullopt;
  return static_cast<ModuleStatus>(b);
}

}  // namespace healthmap
