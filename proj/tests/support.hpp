#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "healthmap/healthmap.hpp"

namespace hmtest {

using namespace healthmap;

inline std::filesystem::path data_dir() { return HM_TEST_DATA_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  const std::string s = read_file(p);
  return {s.begin(), s.end()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int n = 0;
  auto dir = std::filesystem::temp_directory_path() / ("hm_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename Level>
Level random_level(std::mt19937_64& rng, int lo = 0) {
  return static_cast<Level>(std::uniform_int_distribution<int>(lo, 3)(rng));
}

struct MapShape {
  int max_modules = 12;
  int max_instruments = 3;
  int max_dependencies = 6;
  int max_faults = 6;
  int max_detections = 4;
  bool shuffle_modules = true;  // parents may follow children in module order
};

/// Random structurally valid Health Map.
inline HealthMap random_map(std::mt19937_64& rng, const MapShape& shape = {}) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  HealthMap map;
  const int n = pick(1, shape.max_modules);
  std::set<std::uint32_t> used;
  std::vector<ModuleId> ids;
  for (int i = 0; i < n; ++i) {
    ModuleId id;
    do id = static_cast<ModuleId>(rng() % 5000 + 1); while (!used.insert(id).second);
    std::optional<ModuleId> parent;
    if (!ids.empty() && pick(0, 4) != 0) parent = ids[pick(0, static_cast<int>(ids.size()) - 1)];
    add_module(map, id, parent, random_level<Severity>(rng));
    ids.push_back(id);
  }
  std::vector<DiagResourceId> instruments;
  DiagResourceId next = static_cast<DiagResourceId>(rng() % 1000 + 1);
  for (ModuleId id : ids) {
    const int k = pick(0, shape.max_instruments);
    for (int j = 0; j < k; ++j) {
      add_diag_resource(map, id, next, static_cast<std::uint8_t>(rng()));
      instruments.push_back(next);
      next += static_cast<DiagResourceId>(pick(1, 3));
    }
  }
  if (instruments.empty()) {
    add_diag_resource(map, ids.front(), next, 0);
    instruments.push_back(next);
  }
  if (n > 1) {
    const int deps = pick(0, shape.max_dependencies);
    for (int d = 0; d < deps; ++d) {
      const ModuleId a = ids[pick(0, n - 1)];
      const ModuleId b = ids[pick(0, n - 1)];
      if (a != b) add_dependency(map, a, b, random_level<Severity>(rng, 1));
    }
  }
  const int faults = pick(0, shape.max_faults);
  for (int f = 0; f < faults; ++f) {
    const ModuleId m = ids[pick(0, n - 1)];
    const DiagResourceId det = instruments[pick(0, static_cast<int>(instruments.size()) - 1)];
    const FaultRef ref = add_fault_with_detection(map, m, random_level<Severity>(rng, 1), random_level<Persistence>(rng, 1),
                                                  static_cast<std::uint8_t>(pick(0, 3)), det, rng() % 1000000,
                                                  static_cast<std::uint32_t>(rng()));
    Fault& fault = map.fault(ref);
    fault.detections.front().counter = static_cast<std::uint32_t>(pick(1, 4));
    const int extra = pick(0, shape.max_detections - 1);
    for (int d = 0; d < extra; ++d) {
      FaultDetection fd;
      fd.detector = instruments[pick(0, static_cast<int>(instruments.size()) - 1)];
      fd.timestamp = rng();
      fd.counter = static_cast<std::uint32_t>(pick(1, 5));
      fd.payload = static_cast<std::uint32_t>(rng());
      fd.flags = static_cast<std::uint8_t>(pick(0, 1));
      fault.detections.push_back(fd);
    }
  }
  if (shape.shuffle_modules) std::shuffle(map.modules.begin(), map.modules.end(), rng);
  return map;
}

struct LevelPair {
  Severity s = Severity::kZero;
  Persistence p = Persistence::kZero;
};

inline void raise(LevelPair& into, Severity s, Persistence p) {
  into.s = std::max(into.s, s);
  into.p = std::max(into.p, p);
}

/// Brute-force Resource Map: every upward path from every faulty module and
/// every single dependency hop is enumerated explicitly.
inline std::vector<RmEntry> oracle_rm(const HealthMap& map, const std::set<ModuleId>& maintenance = {}) {
  std::map<ModuleId, const Module*> by_id;
  for (const auto& m : map.modules) by_id[m.id] = &m;

  // Ancestor chain of y, starting with y itself.
  auto chain = [&](ModuleId y) {
    std::vector<const Module*> out{by_id.at(y)};
    while (out.back()->parent) out.push_back(by_id.at(*out.back()->parent));
    return out;
  };
  // Severity s starting at y, capped by every criticality on the way up to
  // chain[k]; nullopt if a ZERO criticality blocks the path.
  auto climb = [&](const std::vector<const Module*>& path, std::size_t k, Severity s) -> std::optional<Severity> {
    for (std::size_t i = 0; i < k; ++i) {
      if (path[i]->criticality == Severity::kZero) return std::nullopt;
      s = std::min(s, path[i]->criticality);
    }
    return s;
  };

  std::map<ModuleId, LevelPair> hierarchy, result;
  for (const auto& m : map.modules) {
    hierarchy[m.id];
    result[m.id];
  }
  for (const auto& y : map.modules) {
    LevelPair own;
    for (const auto& f : y.faults) raise(own, f.severity, f.persistence);
    if (own.s == Severity::kZero) continue;
    const auto path = chain(y.id);
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (auto s = climb(path, k, own.s)) raise(hierarchy[path[k]->id], *s, own.p);
    }
  }
  result = hierarchy;
  for (const auto& q : map.modules) {
    const LevelPair src = hierarchy.at(q.id);
    if (src.s == Severity::kZero) continue;
    for (const auto& d : q.dependencies) {
      const Severity hop = std::min(src.s, d.severity);
      const auto path = chain(d.dependent);
      for (std::size_t k = 0; k < path.size(); ++k) {
        if (auto s = climb(path, k, hop)) raise(result[path[k]->id], *s, src.p);
      }
    }
  }

  std::vector<RmEntry> out;
  for (const auto& m : map.modules) {
    RmEntry e{m.id, result.at(m.id).s, result.at(m.id).p, ModuleStatus::kAvailable};
    bool maint = false;
    for (const Module* a : chain(m.id)) maint = maint || maintenance.contains(a->id);
    if (maint) {
      e.status = ModuleStatus::kMaintenance;
    } else if (!m.faults.empty()) {
      e.status = ModuleStatus::kOwnFault;
    } else if (e.worst_severity != Severity::kZero) {
      e.status = ModuleStatus::kPropagatedFault;
    }
    out.push_back(e);
  }
  return out;
}

inline std::string describe(const std::vector<RmEntry>& entries) {
  std::ostringstream s;
  for (const auto& e : entries) {
    s << e.module_id << ":" << to_string(e.worst_severity) << "/" << to_string(e.worst_persistence) << "/"
      << to_string(e.status) << " ";
  }
  return s.str();
}

/// Empty string when `after` differs from `before` inside [32, old length)
/// only at list-tail links that were null (and now point past the old end),
/// detection counter/flag fields and fault severity/persistence bytes.
inline std::string check_append_only(std::span<const std::uint8_t> before, std::span<const std::uint8_t> after) {
  using namespace healthmap::shm;
  const DecodedImage old = decode(before);
  const std::size_t old_end = old.layout.header.total_length;
  if (after.size() < old_end) return "image shrank";
  std::vector<int> allowed(old_end, 0);  // 1 = patchable field, 2 = null link that may be spliced
  auto mark = [&](std::size_t at, std::size_t n, int kind) {
    for (std::size_t i = 0; i < n; ++i) allowed[at + i] = kind;
  };
  auto null_link = [&](std::size_t at) { return bytes::load_le<std::uint32_t>(before, at) == 0; };
  for (std::size_t mi = 0; mi < old.layout.module_offsets.size(); ++mi) {
    const std::size_t mo = old.layout.module_offsets[mi];
    if (null_link(mo + mod::kFirstFault)) mark(mo + mod::kFirstFault, 4, 2);
    for (std::size_t fi = 0; fi < old.layout.fault_offsets[mi].size(); ++fi) {
      const std::size_t fo = old.layout.fault_offsets[mi][fi];
      if (null_link(fo + flt::kNext)) mark(fo + flt::kNext, 4, 2);
      if (null_link(fo + flt::kFirstDetection)) mark(fo + flt::kFirstDetection, 4, 2);
      mark(fo + flt::kSeverity, 2, 1);
      for (std::uint32_t d : old.layout.detection_offsets[mi][fi]) {
        if (null_link(d + det::kNext)) mark(d + det::kNext, 4, 2);
        mark(d + det::kCounter, 4, 1);
        mark(d + det::kFlags, 1, 1);
      }
    }
  }
  for (std::size_t pos = kHeaderSize; pos < old_end; ++pos) {
    if (before[pos] == after[pos]) continue;
    if (allowed[pos] == 0) return "byte " + std::to_string(pos) + " changed outside the patch classes";
  }
  // Spliced links must point into the appended region.
  for (std::size_t pos = kHeaderSize; pos < old_end;) {
    if (allowed[pos] != 2) {
      ++pos;
      continue;
    }
    const auto v = bytes::load_le<std::uint32_t>(after, pos);
    if (v != 0 && v < old_end) return "link at " + std::to_string(pos) + " spliced to old record " + std::to_string(v);
    pos += 4;
  }
  return {};
}

/// quad-core CPU system, compiled from the fixture.
inline CompiledHealthMap quadcore() { return compile(read_file(data_dir() / "quadcore.xml")); }

}  // namespace hmtest
