#pragma once

// Resource Map: per-module run-time health summary (worst severity, worst
// persistence, status), initialized from a Health Map and kept current with
// single-fault updates that propagate from child to parent through each
// module's criticality (s_prop = min(s, criticality)).
//
// Two severity tiers are tracked per module. The hierarchy tier holds only
// own faults and criticality-capped child propagation. The published tier
// additionally holds severity received over dependency edges. Dependency
// hops read the hierarchy tier, so a dependency never chains into a second
// hop and the result does not depend on the order faults arrive in.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "healthmap/byte_io.hpp"
#include "healthmap/error.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/symbols.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct RmEntry {
  static constexpr std::size_t kEncodedSize = 7;  // id u32 | severity u8 | persistence u8 | status u8

  ModuleId module_id = 0;
  Severity worst_severity = Severity::kZero;
  Persistence worst_persistence = Persistence::kZero;
  ModuleStatus status = ModuleStatus::kAvailable;

  bool operator==(const RmEntry&) const = default;
};

inline void encode_entry(std::vector<std::uint8_t>& out, const RmEntry& e) {
  bytes::append_le<std::uint32_t>(out, e.module_id);
  out.push_back(static_cast<std::uint8_t>(e.worst_severity));
  out.push_back(static_cast<std::uint8_t>(e.worst_persistence));
  out.push_back(static_cast<std::uint8_t>(e.status));
}

/// Decodes one 7-byte entry at `pos`; throws `code` for out-of-range enums.
inline RmEntry decode_entry(std::span<const std::uint8_t> buf, std::size_t pos, ErrorCode code) {
  RmEntry e;
  e.module_id = bytes::read_le<std::uint32_t>(buf, pos, code, "entry id");
  if (buf.size() - pos < RmEntry::kEncodedSize) throw Error(code, "truncated entry");
  auto s = severity_from_byte(buf[pos + 4]);
  auto p = persistence_from_byte(buf[pos + 5]);
  auto st = status_from_byte(buf[pos + 6]);
  if (!s || !p || !st) throw Error(code, "entry for module " + std::to_string(e.module_id) + " has bad enum bytes");
  e.worst_severity = *s;
  e.worst_persistence = *p;
  e.status = *st;
  return e;
}

class ResourceMap {
 public:
  ResourceMap() = default;

  /// Empty summary over the module topology of `map` (every entry ZERO/ZERO/AVAILABLE).
  explicit ResourceMap(const HealthMap& map) {
    const std::size_t n = map.modules.size();
    nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i) index_.emplace(map.modules[i].id, i);
    for (std::size_t i = 0; i < n; ++i) {
      const Module& m = map.modules[i];
      Node& node = nodes_[i];
      node.id = m.id;
      node.criticality = m.criticality;
      if (m.parent) node.parent = index_.at(*m.parent);
      for (const auto& d : m.dependencies) node.dependents.emplace_back(index_.at(d.dependent), d.severity);
      if (node.parent) nodes_[*node.parent].children.push_back(i);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool contains(ModuleId id) const { return index_.contains(id); }

  RmEntry entry(ModuleId id) const { return entry_at(slot(id)); }

  /// Entries in Health Map module order.
  std::vector<RmEntry> entries() const {
    std::vector<RmEntry> out;
    out.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) out.push_back(entry_at(i));
    return out;
  }

  /// Raises the module's worst values to at least (s_f, p_f), records the
  /// status, then propagates. OWN_FAULT is sticky; MAINTENANCE is only
  /// changed through set_maintenance.
  void update_single_fault(ModuleId id, Severity s_f, Persistence p_f, ModuleStatus st_f) {
    const std::size_t i = slot(id);
    raise(nodes_[i].hierarchy, s_f, p_f);
    raise(nodes_[i].published, s_f, p_f);
    if (st_f == ModuleStatus::kOwnFault) nodes_[i].own_fault = true;
    propagate_fault_at(i);
  }

  void propagate_fault(ModuleId id) { propagate_fault_at(slot(id)); }

  /// Marks (or unmarks) `id` and its whole subtree as under maintenance.
  /// Unmarking restores the status implied by the fault data.
  void set_maintenance(ModuleId id, bool on) { nodes_[slot(id)].maintenance_mark = on; }

  bool under_maintenance(ModuleId id) const { return covered_by_maintenance(slot(id)); }

  std::vector<std::uint8_t> encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(nodes_.size() * RmEntry::kEncodedSize);
    for (const auto& e : entries()) encode_entry(out, e);
    return out;
  }

  bool operator==(const ResourceMap& other) const { return entries() == other.entries(); }

  // Loads own-fault worst values of one module; used by initialization.
  void seed_own_faults(ModuleId id, Severity s, Persistence p) {
    Node& node = nodes_[slot(id)];
    raise(node.hierarchy, s, p);
    raise(node.published, s, p);
    node.own_fault = true;
  }

 private:
  struct Level {
    Severity severity = Severity::kZero;
    Persistence persistence = Persistence::kZero;
  };

  struct Node {
    ModuleId id = 0;
    Severity criticality = Severity::kZero;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::vector<std::pair<std::size_t, Severity>> dependents;
    Level hierarchy;
    Level published;
    bool own_fault = false;
    bool maintenance_mark = false;
  };

  static void raise(Level& level, Severity s, Persistence p) {
    level.severity = max_level(level.severity, s);
    level.persistence = max_level(level.persistence, p);
  }

  std::size_t slot(ModuleId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorCode::kUnknownModule, "module " + std::to_string(id) + " has no RM entry");
    return it->second;
  }

  bool covered_by_maintenance(std::size_t i) const {
    for (std::optional<std::size_t> cur = i; cur; cur = nodes_[*cur].parent) {
      if (nodes_[*cur].maintenance_mark) return true;
    }
    return false;
  }

  RmEntry entry_at(std::size_t i) const {
    const Node& node = nodes_[i];
    RmEntry e{node.id, node.published.severity, node.published.persistence, ModuleStatus::kAvailable};
    if (covered_by_maintenance(i)) {
      e.status = ModuleStatus::kMaintenance;
    } else if (node.own_fault) {
      e.status = ModuleStatus::kOwnFault;
    } else if (node.published.severity != Severity::kZero) {
      e.status = ModuleStatus::kPropagatedFault;
    }
    return e;
  }

  void propagate_fault_at(std::size_t i) {
    const Node& node = nodes_[i];
    for (const auto& [dependent, dep_severity] : node.dependents) {
      if (dep_severity == Severity::kZero || node.hierarchy.severity == Severity::kZero) continue;
      raise(nodes_[dependent].published, cap_severity(node.hierarchy.severity, dep_severity),
            node.hierarchy.persistence);
      climb_published(dependent);
    }
    if (node.criticality == Severity::kZero || !node.parent) return;
    const std::size_t parent = *node.parent;
    raise(nodes_[parent].hierarchy, cap_severity(node.hierarchy.severity, node.criticality), node.hierarchy.persistence);
    raise(nodes_[parent].published, cap_severity(node.published.severity, node.criticality), node.published.persistence);
    propagate_fault_at(parent);
  }

  // Dependency-derived severity climbs the parent chain but takes no further hops.
  void climb_published(std::size_t i) {
    while (nodes_[i].criticality != Severity::kZero && nodes_[i].parent) {
      const std::size_t parent = *nodes_[i].parent;
      raise(nodes_[parent].published, cap_severity(nodes_[i].published.severity, nodes_[i].criticality),
            nodes_[i].published.persistence);
      i = parent;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<ModuleId, std::size_t> index_;
};

/// Fills a Resource Map by scanning every module's faults once, taking the
/// worst severity and persistence, then propagating. A module is OWN_FAULT
/// only if it has at least one fault.
inline ResourceMap init_resource_map(const HealthMap& map) {
  require_valid(map);
  ResourceMap rm(map);
  for (const Module& m : map.modules) {
    if (!m.faults.empty()) {
      Severity s_worst = Severity::kZero;
      Persistence p_worst = Persistence::kZero;
      for (const Fault& f : m.faults) {
        s_worst = max_level(s_worst, f.severity);
        p_worst = max_level(p_worst, f.persistence);
      }
      rm.seed_own_faults(m.id, s_worst, p_worst);
    }
    rm.propagate_fault(m.id);
  }
  return rm;
}

inline std::vector<std::uint8_t> encode_entries(std::span<const RmEntry> entries) {
  std::vector<std::uint8_t> out;
  out.reserve(entries.size() * RmEntry::kEncodedSize);
  for (const auto& e : entries) encode_entry(out, e);
  return out;
}

/// Text table with the columns Module name | Worst severity | Worst
/// persistence | Status, rows sorted by dotted name.
inline std::string render_table(std::span<const RmEntry> entries, const SymbolTable& symbols) {
  struct Row {
    std::string name;
    const RmEntry* entry;
  };
  std::vector<Row> rows;
  rows.reserve(entries.size());
  for (const auto& e : entries) rows.push_back({symbols.name_of(e.module_id), &e});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.name < b.name; });

  const std::array<std::string, 4> header{"Module name", "Worst severity", "Worst persistence", "Status"};
  std::array<std::size_t, 3> width{header[0].size(), header[1].size(), header[2].size()};
  for (const auto& r : rows) {
    width[0] = std::max(width[0], r.name.size());
    width[1] = std::max(width[1], to_string(r.entry->worst_severity).size());
    width[2] = std::max(width[2], to_string(r.entry->worst_persistence).size());
  }
  auto line = [&](std::string_view a, std::string_view b, std::string_view c, std::string_view d) {
    std::string out;
    auto cell = [&](std::string_view text, std::size_t w) {
      out += text;
      out.append(w - text.size(), ' ');
      out += " | ";
    };
    cell(a, width[0]);
    cell(b, width[1]);
    cell(c, width[2]);
    out += d;
    out += '\n';
    return out;
  };
  std::string out = line(header[0], header[1], header[2], header[3]);
  out += std::string(width[0] + 1, '-') + '+' + std::string(width[1] + 2, '-') + '+' +
         std::string(width[2] + 2, '-') + '+' + std::string(header[3].size() + 1, '-') + '\n';
  for (const auto& r : rows) {
    out += line(r.name, to_string(r.entry->worst_severity), to_string(r.entry->worst_persistence),
                to_string(r.entry->status));
  }
  return out;
}

inline std::string render_table(const ResourceMap& rm, const SymbolTable& symbols) {
  const auto entries = rm.entries();
  return render_table(std::span<const RmEntry>(entries), symbols);
}

}  // namespace healthmap
