#include <gtest/gtest.h>

#include "support.hpp"

using namespace healthmap;

namespace {

struct QuadCoreState {
  CompiledHealthMap c = hmtest::quadcore();
  ResourceMap rm = init_resource_map(c.map);
};

// Independent per-core check straight from the RM rows and the symbol names.
CoreMask oracle_mask(const ResourceMap& rm, const SymbolTable& symbols, const TaskRequirement& t) {
  std::uint32_t max_core = 0;
  for (const auto& s : symbols.entries()) {
    if (s.core_id) max_core = std::max(max_core, *s.core_id);
  }
  CoreMask mask(max_core + 1);
  auto fine = [&](ModuleId id) {
    const RmEntry e = rm.entry(id);
    return e.status != ModuleStatus::kMaintenance && e.worst_severity <= t.max_severity &&
           e.worst_persistence <= t.max_persistence;
  };
  for (const auto& s : symbols.entries()) {
    if (!s.core_id || !fine(s.id)) continue;
    bool ok = true;
    for (const auto& sub : t.required_submodules) {
      const SymbolEntry* x = symbols.find(s.name + "." + sub);
      ok = ok && x != nullptr && fine(x->id);
    }
    if (ok) mask.set(*s.core_id);
  }
  return mask;
}

}  // namespace

TEST(Affinity, QuadCoreMasks) {
  QuadCoreState st;
  st.rm.set_maintenance(600, true);
  report_detection(st.c.map, DetectionReport{301, Severity::kHigh, 1, 1000, 0}, ClassifierConfig{}, st.rm);
  const auto tasks = parse_task_set(hmtest::read_file(hmtest::data_dir() / "tasks.txt"));
  const auto masks = compute_affinity(st.rm, st.c.symbols, tasks);
  ASSERT_EQ(masks.size(), 2u);
  EXPECT_EQ(masks[0].mask.to_hex(), "0x6");
  EXPECT_EQ(masks[1].mask.to_hex(), "0x7");
  EXPECT_EQ(format_masks(masks), "fpu_strict 0x6\nany_core 0x7\n");
}

TEST(Affinity, FaultFreeIsAllOnes) {
  QuadCoreState st;
  const std::vector<TaskRequirement> tasks{{"t", {"FPU"}, Severity::kZero, Persistence::kZero}};
  EXPECT_EQ(compute_affinity(st.rm, st.c.symbols, tasks)[0].mask.to_hex(), "0xf");
}

TEST(Affinity, VacuousThresholdsOnlyExcludeMaintenance) {
  QuadCoreState st;
  for (DiagResourceId d : {300u, 401u, 501u}) {
    report_detection(st.c.map, DetectionReport{d, Severity::kHigh, 0, 0, 0}, ClassifierConfig{}, st.rm);
  }
  st.rm.set_maintenance(500, true);
  const std::vector<TaskRequirement> tasks{{"t", {"FPU"}, Severity::kHigh, Persistence::kPermanent}};
  EXPECT_EQ(compute_affinity(st.rm, st.c.symbols, tasks)[0].mask.to_hex(), "0xb");
}

TEST(Affinity, Errors) {
  QuadCoreState st;
  auto code = [&](const SymbolTable& syms, std::vector<TaskRequirement> tasks) {
    try {
      compute_affinity(st.rm, syms, tasks);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  EXPECT_EQ(code(st.c.symbols, {{"t", {"GPU"}, Severity::kLow, Persistence::kTransient}}), ErrorCode::kUnknownSubmodule);
  SymbolTable no_cores;
  no_cores.add({1, "CPU", std::nullopt});
  EXPECT_EQ(code(no_cores, {{"t", {}, Severity::kLow, Persistence::kTransient}}), ErrorCode::kNoCoreIds);
  EXPECT_EQ(code(st.c.symbols, {{"t", {}, Severity::kLow, Persistence::kTransient}, {"t", {}, Severity::kLow, Persistence::kTransient}}),
            ErrorCode::kDuplicateId);
  EXPECT_THROW(parse_task_set("task x maxSev=HUGE"), Error);
  EXPECT_THROW(parse_task_set("job x"), Error);
  EXPECT_THROW(parse_task_set("task x needs="), Error);
}

TEST(Affinity, MaskHex) {
  CoreMask m(9);
  m.set(0);
  m.set(8);
  EXPECT_EQ(m.to_hex(), "0x101");
  EXPECT_EQ(CoreMask(1).to_hex(), "0x0");
  CoreMask wide(130);
  wide.set(129);
  EXPECT_TRUE(wide.test(129));
  EXPECT_EQ(wide.to_hex().size(), 2u + 33u);
}

// Random fault sets on synthesized systems: oracle agreement, fewer faults or
// looser thresholds never shrink a mask, maintenance never grows one.
TEST(Affinity, OracleAndMonotonicity) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    auto sys = synthesize_system(1 + static_cast<std::uint32_t>(rng() % 6));
    for (auto& m : sys.map.modules) {
      m.faults.clear();
      m.dependencies.clear();
    }
    ResourceMap rm = init_resource_map(sys.map);
    ResourceMap before = rm;
    HealthMap before_map = sys.map;
    const int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      const Module& m = sys.map.modules[rng() % sys.map.modules.size()];
      if (i == n - 1) {
        before = rm;
        before_map = sys.map;
      }
      report_detection(sys.map, DetectionReport{m.diag_resources[0].id, hmtest::random_level<Severity>(rng, 1),
                                                static_cast<std::uint8_t>(rng() % 2), 0, 0},
                        ClassifierConfig{}, rm);
    }
    TaskRequirement strict{"s", {}, hmtest::random_level<Severity>(rng), hmtest::random_level<Persistence>(rng)};
    if (rng() % 2) strict.required_submodules.push_back("U" + std::to_string(1 + rng() % 15));
    TaskRequirement loose = strict;
    loose.name = "l";
    loose.max_severity = std::max(strict.max_severity, hmtest::random_level<Severity>(rng));
    loose.max_persistence = std::max(strict.max_persistence, hmtest::random_level<Persistence>(rng));
    const std::vector<TaskRequirement> tasks{strict, loose};

    const auto now = compute_affinity(rm, sys.symbols, tasks);
    ASSERT_EQ(now[0].mask, oracle_mask(rm, sys.symbols, strict));
    ASSERT_EQ(now[1].mask, oracle_mask(rm, sys.symbols, loose));
    ASSERT_TRUE(now[0].mask.is_subset_of(now[1].mask));
    const auto earlier = compute_affinity(before, sys.symbols, tasks);
    ASSERT_TRUE(now[0].mask.is_subset_of(earlier[0].mask));

    ResourceMap maint = rm;
    maint.set_maintenance(sys.map.modules[rng() % sys.map.modules.size()].id, true);
    ASSERT_TRUE(compute_affinity(maint, sys.symbols, tasks)[1].mask.is_subset_of(now[1].mask));
  }
}
