#pragma once

// Health-aware core affinity: a core is usable for a task when the core and
// every sub-module the task needs are out of maintenance and within the
// task's severity/persistence tolerance.

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "healthmap/error.hpp"
#include "healthmap/resource_map.hpp"
#include "healthmap/symbols.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct TaskRequirement {
  std::string name;
  std::vector<std::string> required_submodules;  // suffixes under the core's dotted name, e.g. "FPU"
  Severity max_severity = Severity::kZero;
  Persistence max_persistence = Persistence::kZero;
};

/// Bit vector indexed by OS core id.
class CoreMask {
 public:
  CoreMask() = default;
  explicit CoreMask(std::size_t width) : width_(width), words_((width + 63) / 64, 0) {}

  std::size_t width() const { return width_; }
  void set(std::size_t core) { words_.at(core / 64) |= std::uint64_t{1} << (core % 64); }
  bool test(std::size_t core) const { return (words_.at(core / 64) >> (core % 64)) & 1u; }

  bool is_subset_of(const CoreMask& other) const {
    if (width_ != other.width_) return false;
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if ((words_[i] & ~other.words_[i]) != 0) return false;
    }
    return true;
  }

  /// "0x" followed by ceil(width/4) hex digits, most significant first.
  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    const std::size_t digits = std::max<std::size_t>(1, (width_ + 3) / 4);
    std::string out = "0x";
    for (std::size_t d = digits; d-- > 0;) {
      unsigned nibble = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        const std::size_t bit = d * 4 + b;
        if (bit < width_ && test(bit)) nibble |= 1u << b;
      }
      out += kDigits[nibble];
    }
    return out;
  }

  bool operator==(const CoreMask&) const = default;

 private:
  std::size_t width_ = 0;
  std::vector<std::uint64_t> words_;
};

struct AffinityMask {
  std::string task;
  CoreMask mask;
  bool operator==(const AffinityMask&) const = default;
};

inline std::vector<AffinityMask> compute_affinity(std::span<const RmEntry> entries, const SymbolTable& symbols,
                                                  std::span<const TaskRequirement> tasks) {
  std::unordered_map<ModuleId, const RmEntry*> by_id;
  for (const auto& e : entries) by_id[e.module_id] = &e;

  struct Core {
    std::uint32_t core_id;
    const SymbolEntry* symbol;
  };
  std::vector<Core> cores;
  std::uint32_t max_core = 0;
  for (const auto& s : symbols.entries()) {
    if (!s.core_id) continue;
    if (!by_id.contains(s.id)) throw Error(ErrorCode::kMissingSymbol, "core module " + s.name + " has no RM entry");
    cores.push_back({*s.core_id, &s});
    max_core = std::max(max_core, *s.core_id);
  }
  if (cores.empty()) throw Error(ErrorCode::kNoCoreIds, "no module carries a core id");

  auto usable = [](const RmEntry& e, const TaskRequirement& t) {
    return e.status != ModuleStatus::kMaintenance &&
           static_cast<std::uint8_t>(e.worst_severity) <= static_cast<std::uint8_t>(t.max_severity) &&
           static_cast<std::uint8_t>(e.worst_persistence) <= static_cast<std::uint8_t>(t.max_persistence);
  };
  auto submodule_entry = [&](const Core& c, const std::string& suffix) -> const RmEntry* {
    const SymbolEntry* sub = symbols.find(c.symbol->name + "." + suffix);
    if (sub == nullptr) return nullptr;
    auto it = by_id.find(sub->id);
    return it == by_id.end() ? nullptr : it->second;
  };

  std::unordered_set<std::string> names;
  std::vector<AffinityMask> out;
  for (const auto& task : tasks) {
    if (!names.insert(task.name).second) throw Error(ErrorCode::kDuplicateId, "task " + task.name + " listed twice");
    for (const auto& suffix : task.required_submodules) {
      const bool resolves = std::any_of(cores.begin(), cores.end(), [&](const Core& c) { return submodule_entry(c, suffix); });
      if (!resolves) throw Error(ErrorCode::kUnknownSubmodule, "task " + task.name + " needs '" + suffix + "', which no core has");
    }
    AffinityMask result{task.name, CoreMask(std::size_t{max_core} + 1)};
    for (const auto& c : cores) {
      bool ok = usable(*by_id.at(c.symbol->id), task);
      for (const auto& suffix : task.required_submodules) {
        if (!ok) break;
        const RmEntry* sub = submodule_entry(c, suffix);
        ok = sub != nullptr && usable(*sub, task);
      }
      if (ok) result.mask.set(c.core_id);
    }
    out.push_back(std::move(result));
  }
  return out;
}

inline std::vector<AffinityMask> compute_affinity(const ResourceMap& rm, const SymbolTable& symbols,
                                                  std::span<const TaskRequirement> tasks) {
  const auto entries = rm.entries();
  return compute_affinity(std::span<const RmEntry>(entries), symbols, tasks);
}

/// One task per line: `task <name> [needs=<SUB,...>] [maxSev=<SEV>] [maxPers=<PERS>]`.
/// Blank lines and lines starting with '#' are skipped.
inline std::vector<TaskRequirement> parse_task_set(std::string_view text) {
  std::vector<TaskRequirement> tasks;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word) || word.starts_with('#')) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kParseError, "task set line " + std::to_string(lineno) + ": " + why);
    };
    if (word != "task") throw fail("expected 'task'");
    TaskRequirement t;
    if (!(fields >> t.name)) throw fail("missing task name");
    while (fields >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) throw fail("expected key=value, got '" + word + "'");
      const std::string key = word.substr(0, eq);
      const std::string value = word.substr(eq + 1);
      if (key == "needs") {
        if (value.empty()) throw fail("needs= lists no sub-module");
        std::istringstream parts(value);
        std::string sub;
        while (std::getline(parts, sub, ',')) {
          if (sub.empty()) throw fail("empty sub-module name");
          t.required_submodules.push_back(sub);
        }
      } else if (key == "maxSev") {
        auto s = parse_severity(value);
        if (!s) throw fail("bad severity '" + value + "'");
        t.max_severity = *s;
      } else if (key == "maxPers") {
        auto p = parse_persistence(value);
        if (!p) throw fail("bad persistence '" + value + "'");
        t.max_persistence = *p;
      } else {
        throw fail("unknown key '" + key + "'");
      }
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline std::string format_masks(std::span<const AffinityMask> masks) {
  std::string out;
  for (const auto& m : masks) out += m.task + " " + m.mask.to_hex() + "\n";
  return out;
}

}  // namespace healthmap
