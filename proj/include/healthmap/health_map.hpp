#pragma once

// In-memory Health Map: modules (functional resources) with their diagnostic
// resources, dependency records and faults; faults own their detections.
// Every list keeps insertion order, mirroring the linked lists of the
// serialized image.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "healthmap/error.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct FaultDetection {
  static constexpr std::uint8_t kMergedFlag = 0x01;

  DiagResourceId detector = 0;
  Timestamp timestamp = 0;
  std::uint32_t counter = 1;  // merged identical events, >= 1
  std::uint32_t payload = 0;  // raw sensor word
  std::uint8_t flags = 0;

  bool merged() const { return (flags & kMergedFlag) != 0; }
  bool operator==(const FaultDetection&) const = default;
};

struct Fault {
  Severity severity = Severity::kLow;
  Persistence persistence = Persistence::kTransient;
  std::uint8_t classification = 0;
  std::vector<FaultDetection> detections;

  // Sum of counters over all detections.
  std::uint64_t event_count() const {
    std::uint64_t n = 0;
    for (const auto& d : detections) n += d.counter;
    return n;
  }
  bool operator==(const Fault&) const = default;
};

// Owned by the module whose list holds it.
struct DiagResource {
  DiagResourceId id = 0;
  std::uint8_t kind = 0;
  bool operator==(const DiagResource&) const = default;
};

// Attached to the provider module; points at the module that depends on it.
struct Dependency {
  ModuleId dependent = 0;
  Severity severity = Severity::kLow;
  bool operator==(const Dependency&) const = default;
};

struct Module {
  ModuleId id = 0;
  std::optional<ModuleId> parent;
  Severity criticality = Severity::kZero;  // cap on upward propagation
  std::vector<DiagResource> diag_resources;
  std::vector<Dependency> dependencies;
  std::vector<Fault> faults;
  bool operator==(const Module&) const = default;
};

struct FaultRef {
  ModuleId module = 0;
  std::size_t index = 0;
  bool operator==(const FaultRef&) const = default;
};

struct DetectorLocation {
  std::size_t module_index = 0;
  std::size_t resource_index = 0;
};

struct HealthMap {
  std::vector<Module> modules;

  bool operator==(const HealthMap&) const = default;

  std::size_t module_count() const { return modules.size(); }

  const Module* find_module(ModuleId id) const {
    for (const auto& m : modules) {
      if (m.id == id) return &m;
    }
    return nullptr;
  }
  Module* find_module(ModuleId id) {
    return const_cast<Module*>(std::as_const(*this).find_module(id));
  }

  std::optional<std::size_t> module_index(ModuleId id) const {
    for (std::size_t i = 0; i < modules.size(); ++i) {
      if (modules[i].id == id) return i;
    }
    return std::nullopt;
  }

  std::optional<DetectorLocation> find_detector(DiagResourceId id) const {
    for (std::size_t i = 0; i < modules.size(); ++i) {
      const auto& res = modules[i].diag_resources;
      for (std::size_t j = 0; j < res.size(); ++j) {
        if (res[j].id == id) return DetectorLocation{i, j};
      }
    }
    return std::nullopt;
  }

  Fault& fault(const FaultRef& ref) {
    Module* m = find_module(ref.module);
    if (m == nullptr || ref.index >= m->faults.size()) {
      throw Error(ErrorCode::kUnknownModule, "no fault #" + std::to_string(ref.index) + " on module " +
                                                 std::to_string(ref.module));
    }
    return m->faults[ref.index];
  }

  std::size_t diag_resource_count() const { return count(&Module::diag_resources); }
  std::size_t dependency_count() const { return count(&Module::dependencies); }
  std::size_t fault_count() const { return count(&Module::faults); }
  std::size_t detection_count() const {
    std::size_t n = 0;
    for (const auto& m : modules) {
      for (const auto& f : m.faults) n += f.detections.size();
    }
    return n;
  }

 private:
  template <typename List>
  std::size_t count(List Module::*list) const {
    std::size_t n = 0;
    for (const auto& m : modules) n += (m.*list).size();
    return n;
  }
};

inline Module& add_module(HealthMap& map, ModuleId id, std::optional<ModuleId> parent, Severity criticality) {
  if (map.find_module(id) != nullptr) {
    throw Error(ErrorCode::kDuplicateId, "module " + std::to_string(id) + " already present");
  }
  if (parent && map.find_module(*parent) == nullptr) {
    throw Error(ErrorCode::kUnknownParent, "parent " + std::to_string(*parent) + " of module " +
                                               std::to_string(id) + " does not exist");
  }
  Module m;
  m.id = id;
  m.parent = parent;
  m.criticality = criticality;
  map.modules.push_back(std::move(m));
  return map.modules.back();
}

inline DiagResource& add_diag_resource(HealthMap& map, ModuleId owner, DiagResourceId id, std::uint8_t kind) {
  Module* m = map.find_module(owner);
  if (m == nullptr) throw Error(ErrorCode::kUnknownModule, "instrument owner " + std::to_string(owner));
  if (map.find_detector(id)) {
    throw Error(ErrorCode::kDuplicateId, "diagnostic resource " + std::to_string(id) + " already present");
  }
  m->diag_resources.push_back(DiagResource{id, kind});
  return m->diag_resources.back();
}

inline Dependency& add_dependency(HealthMap& map, ModuleId provider, ModuleId dependent, Severity severity) {
  Module* p = map.find_module(provider);
  if (p == nullptr) throw Error(ErrorCode::kUnknownModule, "dependency provider " + std::to_string(provider));
  if (map.find_module(dependent) == nullptr) {
    throw Error(ErrorCode::kUnknownModule, "dependency dependent " + std::to_string(dependent));
  }
  if (provider == dependent) {
    throw Error(ErrorCode::kStructureInvalid, "module " + std::to_string(provider) + " cannot depend on itself");
  }
  p->dependencies.push_back(Dependency{dependent, severity});
  return p->dependencies.back();
}

inline FaultRef add_fault_with_detection(HealthMap& map, ModuleId module_id, Severity severity,
                                         Persistence persistence, std::uint8_t classification,
                                         DiagResourceId detector, Timestamp timestamp, std::uint32_t payload) {
  Module* m = map.find_module(module_id);
  if (m == nullptr) throw Error(ErrorCode::kUnknownModule, "module " + std::to_string(module_id));
  if (!map.find_detector(detector)) {
    throw Error(ErrorCode::kUnknownDetector, "diagnostic resource " + std::to_string(detector));
  }
  if (severity == Severity::kZero) throw Error(ErrorCode::kZeroSeverity, "faults must have severity above ZERO");
  if (persistence == Persistence::kZero) {
    throw Error(ErrorCode::kStructureInvalid, "faults must have persistence TRANSIENT or above");
  }
  Fault f;
  f.severity = severity;
  f.persistence = persistence;
  f.classification = classification;
  f.detections.push_back(FaultDetection{detector, timestamp, 1, payload, 0});
  m->faults.push_back(std::move(f));
  return FaultRef{module_id, m->faults.size() - 1};
}

enum class ViolationKind {
  kDuplicateModuleId,
  kDuplicateDiagId,
  kUnknownParent,
  kParentCycle,
  kUnknownDependent,
  kSelfDependency,
  kZeroDependencySeverity,
  kZeroSeverityFault,
  kZeroPersistenceFault,
  kUnknownDetector,
  kBadCounter,
};

constexpr std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDuplicateModuleId: return "DuplicateModuleId";
    case ViolationKind::kDuplicateDiagId: return "DuplicateDiagId";
    case ViolationKind::kUnknownParent: return "UnknownParent";
    case ViolationKind::kParentCycle: return "ParentCycle";
    case ViolationKind::kUnknownDependent: return "UnknownDependent";
    case ViolationKind::kSelfDependency: return "SelfDependency";
    case ViolationKind::kZeroDependencySeverity: return "ZeroDependencySeverity";
    case ViolationKind::kZeroSeverityFault: return "ZeroSeverityFault";
    case ViolationKind::kZeroPersistenceFault: return "ZeroPersistenceFault";
    case ViolationKind::kUnknownDetector: return "UnknownDetector";
    case ViolationKind::kBadCounter: return "BadCounter";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  ModuleId module = 0;   // module the offending record hangs off
  std::uint32_t ref = 0;  // referenced id (parent, detector, ...) where meaningful

  bool operator==(const Violation&) const = default;
};

inline std::string describe(const Violation& v) {
  return std::string(to_string(v.kind)) + "(module " + std::to_string(v.module) + ", ref " +
         std::to_string(v.ref) + ")";
}

/// Reports every structural rule broken by `map`; empty means valid.
inline std::vector<Violation> validate_structure(const HealthMap& map) {
  std::vector<Violation> out;
  std::unordered_map<ModuleId, std::size_t> index;
  std::unordered_set<DiagResourceId> diag_ids;

  for (std::size_t i = 0; i < map.modules.size(); ++i) {
    const Module& m = map.modules[i];
    if (!index.emplace(m.id, i).second) out.push_back({ViolationKind::kDuplicateModuleId, m.id, m.id});
    for (const auto& r : m.diag_resources) {
      if (!diag_ids.insert(r.id).second) out.push_back({ViolationKind::kDuplicateDiagId, m.id, r.id});
    }
  }

  for (const Module& m : map.modules) {
    if (m.parent && !index.contains(*m.parent)) out.push_back({ViolationKind::kUnknownParent, m.id, *m.parent});

    // A walk longer than the module count that never reached a root is a cycle; only
    // report modules that sit on the cycle themselves.
    std::optional<ModuleId> cursor = m.parent;
    for (std::size_t steps = 0; cursor && steps <= map.modules.size(); ++steps) {
      if (*cursor == m.id) {
        out.push_back({ViolationKind::kParentCycle, m.id, m.id});
        break;
      }
      auto it = index.find(*cursor);
      if (it == index.end()) break;
      cursor = map.modules[it->second].parent;
    }

    for (const auto& d : m.dependencies) {
      if (d.dependent == m.id) {
        out.push_back({ViolationKind::kSelfDependency, m.id, d.dependent});
      } else if (!index.contains(d.dependent)) {
        out.push_back({ViolationKind::kUnknownDependent, m.id, d.dependent});
      }
      if (d.severity == Severity::kZero) out.push_back({ViolationKind::kZeroDependencySeverity, m.id, d.dependent});
    }

    for (const auto& f : m.faults) {
      if (f.severity == Severity::kZero) out.push_back({ViolationKind::kZeroSeverityFault, m.id, f.classification});
      if (f.persistence == Persistence::kZero) {
        out.push_back({ViolationKind::kZeroPersistenceFault, m.id, f.classification});
      }
      for (const auto& d : f.detections) {
        if (!diag_ids.contains(d.detector)) out.push_back({ViolationKind::kUnknownDetector, m.id, d.detector});
        if (d.counter == 0) out.push_back({ViolationKind::kBadCounter, m.id, d.detector});
      }
    }
  }
  return out;
}

inline void require_valid(const HealthMap& map) {
  auto violations = validate_structure(map);
  if (!violations.empty()) {
    std::string detail = describe(violations.front());
    if (violations.size() > 1) detail += " and " + std::to_string(violations.size() - 1) + " more";
    throw Error(ErrorCode::kStructureInvalid, detail);
  }
}

}  // namespace healthmap
