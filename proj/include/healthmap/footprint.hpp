#pragma once

// Memory footprint model for an MPSoC with C cores:
//   M = 16C + 10, R = 3M, D = M, F = 2D, FD = 10F
//   SHM bytes = 32 + 25M + 13R + 9D + 12F + 25FD, RM bytes = 7M

#include <cstdint>
#include <string>

#include "healthmap/error.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/resource_map.hpp"
#include "healthmap/shm_codec.hpp"
#include "healthmap/symbols.hpp"

namespace healthmap {

struct FootprintEstimate {
  std::uint32_t core_count = 0;
  EntityCounts counts;
  std::uint64_t header_bytes = shm::kHeaderSize;
  std::uint64_t module_bytes = 0;
  std::uint64_t diag_resource_bytes = 0;
  std::uint64_t dependency_bytes = 0;
  std::uint64_t fault_bytes = 0;
  std::uint64_t detection_bytes = 0;
  std::uint64_t total_shm_bytes = 0;
  std::uint64_t rm_bytes = 0;
};

inline FootprintEstimate estimate(std::uint32_t cores) {
  if (cores == 0) throw Error(ErrorCode::kInvalidCoreCount, "core count must be at least 1");
  FootprintEstimate e;
  e.core_count = cores;
  e.counts.modules = 16ull * cores + 10;
  e.counts.diag_resources = 3 * e.counts.modules;
  e.counts.dependencies = e.counts.modules;
  e.counts.faults = 2 * e.counts.dependencies;
  e.counts.detections = 10 * e.counts.faults;
  e.module_bytes = shm::kModuleSize * e.counts.modules;
  e.diag_resource_bytes = shm::kDiagResourceSize * e.counts.diag_resources;
  e.dependency_bytes = shm::kDependencySize * e.counts.dependencies;
  e.fault_bytes = shm::kFaultSize * e.counts.faults;
  e.detection_bytes = shm::kDetectionSize * e.counts.detections;
  e.total_shm_bytes = e.header_bytes + e.module_bytes + e.diag_resource_bytes + e.dependency_bytes + e.fault_bytes +
                      e.detection_bytes;
  e.rm_bytes = RmEntry::kEncodedSize * e.counts.modules;
  return e;
}

inline std::string render_estimate(const FootprintEstimate& e) {
  auto row = [](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    return pad(a, 18) + pad(b, 8) + pad(c, 14) + d + "\n";
  };
  const auto& c = e.counts;
  std::string out;
  out += "Cores C = " + std::to_string(e.core_count) + "\n";
  out += "Modules M = 16C + 10 = " + std::to_string(c.modules) + "\n";
  out += "Diag. resources R = 3M = " + std::to_string(c.diag_resources) + "\n";
  out += "Dependencies D = M = " + std::to_string(c.dependencies) + "\n";
  out += "Faults F = 2D = " + std::to_string(c.faults) + "\n";
  out += "Fault detections FD = 10F = " + std::to_string(c.detections) + "\n\n";
  out += row("Entity type", "Amount", "Size (bytes)", "Total (bytes)");
  out += row("Header (SHM)", "1", std::to_string(shm::kHeaderSize), std::to_string(e.header_bytes));
  out += row("Module", std::to_string(c.modules), std::to_string(shm::kModuleSize), std::to_string(e.module_bytes));
  out += row("Diag. resource", std::to_string(c.diag_resources), std::to_string(shm::kDiagResourceSize),
             std::to_string(e.diag_resource_bytes));
  out += row("Dependency", std::to_string(c.dependencies), std::to_string(shm::kDependencySize),
             std::to_string(e.dependency_bytes));
  out += row("Fault", std::to_string(c.faults), std::to_string(shm::kFaultSize), std::to_string(e.fault_bytes));
  out += row("Fault detections", std::to_string(c.detections), std::to_string(shm::kDetectionSize),
             std::to_string(e.detection_bytes));
  out += row("Total", "", "", std::to_string(e.total_shm_bytes));
  out += "\nRM: " + std::to_string(c.modules) + " modules * " + std::to_string(RmEntry::kEncodedSize) +
         " bytes = " + std::to_string(e.rm_bytes) + " bytes\n";
  return out;
}

struct SynthesizedSystem {
  HealthMap map;
  SymbolTable symbols;
};

/// A concrete system with exactly the estimated entity counts: a SYS root
/// with 9 system children, and per core one core module (coreId k) holding
/// 15 sub-modules. Every module has 3 instruments, one dependency and two
/// faults of 10 detections each.
inline SynthesizedSystem synthesize_system(std::uint32_t cores) {
  if (cores == 0) throw Error(ErrorCode::kInvalidCoreCount, "core count must be at least 1");
  constexpr ModuleId kRoot = 1;
  constexpr std::uint32_t kSystemModules = 10;
  constexpr std::uint32_t kSubModules = 15;
  constexpr ModuleId kFirstCore = 1000;
  constexpr ModuleId kCoreStride = 100;
  constexpr std::array<Severity, 3> kLevels{Severity::kLow, Severity::kMedium, Severity::kHigh};
  constexpr std::array<Persistence, 3> kPersistences{Persistence::kTransient, Persistence::kIntermittent,
                                                     Persistence::kPermanent};

  SynthesizedSystem sys;
  HealthMap& map = sys.map;
  add_module(map, kRoot, std::nullopt, Severity::kZero);
  sys.symbols.add({kRoot, "SYS", std::nullopt});
  for (ModuleId id = kRoot + 1; id <= kSystemModules; ++id) {
    add_module(map, id, kRoot, Severity::kLow);
    sys.symbols.add({id, "SYS.S" + std::to_string(id), std::nullopt});
  }
  for (std::uint32_t k = 0; k < cores; ++k) {
    const ModuleId core = kFirstCore + k * kCoreStride;
    const std::string core_name = "SYS.C" + std::to_string(k);
    add_module(map, core, kRoot, Severity::kHigh);
    sys.symbols.add({core, core_name, k});
    for (std::uint32_t s = 1; s <= kSubModules; ++s) {
      add_module(map, core + s, core, kLevels[s % kLevels.size()]);
      sys.symbols.add({core + s, core_name + ".U" + std::to_string(s), std::nullopt});
    }
  }

  const std::size_t n = map.modules.size();
  DiagResourceId next_instrument = 1;
  for (auto& m : map.modules) {
    for (std::uint8_t j = 0; j < 3; ++j) m.diag_resources.push_back({next_instrument++, j});
  }
  for (std::size_t i = 0; i < n; ++i) {
    map.modules[i].dependencies.push_back({map.modules[(i + 1) % n].id, kLevels[i % kLevels.size()]});
  }
  Timestamp t = 1'000'000;
  for (std::size_t i = 0; i < n; ++i) {
    Module& m = map.modules[i];
    for (std::uint8_t cls = 0; cls < 2; ++cls) {
      Fault f;
      f.severity = kLevels[(i + cls) % kLevels.size()];
      f.persistence = kPersistences[(i + 2 * cls) % kPersistences.size()];
      f.classification = cls;
      for (std::uint32_t d = 0; d < 10; ++d) {
        f.detections.push_back({m.diag_resources[d % 3].id, t, 1, static_cast<std::uint32_t>(i * 100 + d), 0});
        t += 2'000'000;
      }
      m.faults.push_back(std::move(f));
    }
  }
  return sys;
}

inline HealthMap synthesize_map(std::uint32_t cores) { return synthesize_system(cores).map; }

}  // namespace healthmap
