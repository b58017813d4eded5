#pragma once

// Name sidecar (.sym): module id -> dotted hierarchical name, plus the OS
// core id of processing-core modules. One line per module:
//   <id> <dotted-name> [core=<coreId>]

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "healthmap/error.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct SymbolEntry {
  ModuleId id = 0;
  std::string name;
  std::optional<std::uint32_t> core_id;
  bool operator==(const SymbolEntry&) const = default;
};

class SymbolTable {
 public:
  void add(SymbolEntry entry) {
    if (by_id_.contains(entry.id)) {
      throw Error(ErrorCode::kDuplicateId, "symbol for module " + std::to_string(entry.id) + " defined twice");
    }
    if (by_name_.contains(entry.name)) throw Error(ErrorCode::kDuplicateId, "module name " + entry.name + " reused");
    by_id_[entry.id] = entries_.size();
    by_name_[entry.name] = entries_.size();
    entries_.push_back(std::move(entry));
  }

  const std::vector<SymbolEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  const SymbolEntry* find(ModuleId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &entries_[it->second];
  }
  const SymbolEntry* find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &entries_[it->second];
  }

  const std::string& name_of(ModuleId id) const {
    const SymbolEntry* e = find(id);
    if (e == nullptr) throw Error(ErrorCode::kMissingSymbol, "no name for module " + std::to_string(id));
    return e->name;
  }

  bool operator==(const SymbolTable& other) const { return entries_ == other.entries_; }

 private:
  std::vector<SymbolEntry> entries_;
  std::unordered_map<ModuleId, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

inline std::string format_sidecar(const SymbolTable& table) {
  std::string out;
  for (const auto& e : table.entries()) {
    out += std::to_string(e.id) + ' ' + e.name;
    if (e.core_id) out += " core=" + std::to_string(*e.core_id);
    out += '\n';
  }
  return out;
}

namespace detail {
inline std::optional<std::uint32_t> parse_u32(std::string_view s) {
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}
}  // namespace detail

inline SymbolTable parse_sidecar(std::string_view text) {
  SymbolTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string id_text, name, extra, rest;
    if (!(fields >> id_text)) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kParseError, "sidecar line " + std::to_string(lineno) + ": " + why);
    };
    auto id = detail::parse_u32(id_text);
    if (!id) throw fail("bad module id '" + id_text + "'");
    if (!(fields >> name)) throw fail("missing module name");
    SymbolEntry entry{*id, name, std::nullopt};
    if (fields >> extra) {
      if (!extra.starts_with("core=")) throw fail("unexpected field '" + extra + "'");
      entry.core_id = detail::parse_u32(std::string_view(extra).substr(5));
      if (!entry.core_id) throw fail("bad core id '" + extra + "'");
    }
    if (fields >> rest) throw fail("trailing text '" + rest + "'");
    table.add(std::move(entry));
  }
  return table;
}

}  // namespace healthmap
