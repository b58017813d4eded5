#include <gtest/gtest.h>
#include <zlib.h>

#include "support.hpp"

using namespace healthmap;

namespace {

std::uint32_t zlib_crc(std::span<const std::uint8_t> b) {
  return static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

}  // namespace

TEST(Levels, OrderingAndNames) {
  EXPECT_LT(Severity::kZero, Severity::kLow);
  EXPECT_LT(Severity::kMedium, Severity::kHigh);
  EXPECT_EQ(max_level(Severity::kLow, Severity::kHigh), Severity::kHigh);
  EXPECT_EQ(min_level(Persistence::kPermanent, Persistence::kTransient), Persistence::kTransient);
  EXPECT_EQ(to_string(ModuleStatus::kPropagatedFault), "PROPAGATED FAULT");
  EXPECT_EQ(parse_severity("MEDIUM"), Severity::kMedium);
  EXPECT_FALSE(parse_severity("medium").has_value());
  EXPECT_EQ(parse_persistence("INTERMITTENT"), Persistence::kIntermittent);
  EXPECT_FALSE(severity_from_byte(4).has_value());
}

TEST(Levels, MaxMinAlgebra) {
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const auto x = static_cast<Severity>(a), y = static_cast<Severity>(b);
      EXPECT_EQ(max_level(x, y), max_level(y, x));
      EXPECT_EQ(min_level(x, y), min_level(y, x));
      EXPECT_EQ(max_level(x, x), x);
      for (int c = 0; c < 4; ++c) {
        const auto z = static_cast<Severity>(c);
        EXPECT_EQ(max_level(max_level(x, y), z), max_level(x, max_level(y, z)));
        EXPECT_EQ(min_level(min_level(x, y), z), min_level(x, min_level(y, z)));
      }
    }
  }
}

TEST(Crc32, CheckValueAndEmpty) {
  EXPECT_EQ(healthmap::crc32(std::string_view("123456789")), 0xCBF43926u);
  EXPECT_EQ(healthmap::crc32(std::string_view("")), 0u);
}

TEST(Crc32, MatchesZlibOnRandomBuffers) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint8_t> buf(rng() % 300);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(healthmap::crc32(buf), zlib_crc(buf));
  }
}

TEST(Crc32, IncrementalEqualsOneShot) {
  const std::vector<std::uint8_t> buf{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::span<const std::uint8_t> s(buf);
  EXPECT_EQ(healthmap::crc32(s.subspan(4), healthmap::crc32(s.first(4))), healthmap::crc32(s));
}

TEST(Crc32, SingleBitFlipsChangeChecksum) {
  std::mt19937_64 rng(12);
  int changed = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::uint8_t> buf(1 + rng() % 200);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    const auto before = healthmap::crc32(buf);
    buf[rng() % buf.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    changed += healthmap::crc32(buf) != before;
  }
  EXPECT_GE(changed, trials * 999 / 1000);
}

TEST(HmCore, AddModule) {
  HealthMap map;
  add_module(map, 1, std::nullopt, Severity::kZero);
  EXPECT_EQ(map.module_count(), 1u);
  add_module(map, 2, 1, Severity::kHigh);
  EXPECT_EQ(map.find_module(2)->parent, 1u);
  try {
    add_module(map, 1, std::nullopt, Severity::kLow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateId);
  }
  try {
    add_module(map, 3, 99, Severity::kLow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownParent);
  }
}

TEST(HmCore, AddFaultWithDetection) {
  HealthMap map;
  add_module(map, 1, std::nullopt, Severity::kLow);
  add_diag_resource(map, 1, 10, 0);
  const FaultRef ref = add_fault_with_detection(map, 1, Severity::kHigh, Persistence::kTransient, 0, 10, 5, 0xAB);
  const Fault& f = map.fault(ref);
  ASSERT_EQ(f.detections.size(), 1u);
  EXPECT_EQ(f.detections[0].counter, 1u);
  add_fault_with_detection(map, 1, Severity::kLow, Persistence::kTransient, 1, 10, 6, 0);
  EXPECT_EQ(map.find_module(1)->faults.size(), 2u);

  auto code_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIoError;
  };
  EXPECT_EQ(code_of([&] { add_fault_with_detection(map, 1, Severity::kZero, Persistence::kTransient, 0, 10, 0, 0); }),
            ErrorCode::kZeroSeverity);
  EXPECT_EQ(code_of([&] { add_fault_with_detection(map, 7, Severity::kLow, Persistence::kTransient, 0, 10, 0, 0); }),
            ErrorCode::kUnknownModule);
  EXPECT_EQ(code_of([&] { add_fault_with_detection(map, 1, Severity::kLow, Persistence::kTransient, 0, 11, 0, 0); }),
            ErrorCode::kUnknownDetector);
}

TEST(HmCore, ValidateStructureExamples) {
  HealthMap map;
  add_module(map, 1, std::nullopt, Severity::kZero);
  add_module(map, 2, 1, Severity::kLow);
  add_module(map, 3, 2, Severity::kLow);
  EXPECT_TRUE(validate_structure(map).empty());

  HealthMap self = map;
  self.find_module(3)->parent = 3;
  const auto v = validate_structure(self);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::kParentCycle);
  EXPECT_EQ(v[0].module, 3u);

  HealthMap zero = map;
  add_diag_resource(zero, 3, 1, 0);
  add_fault_with_detection(zero, 3, Severity::kLow, Persistence::kTransient, 0, 1, 0, 0);
  zero.find_module(3)->faults[0].detections[0].counter = 0;
  const auto z = validate_structure(zero);
  ASSERT_EQ(z.size(), 1u);
  EXPECT_EQ(z[0].kind, ViolationKind::kBadCounter);
}

// Random valid maps validate clean; each injected violation is reported.
TEST(HmCore, InjectedViolationsAreReported) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    HealthMap map = hmtest::random_map(rng);
    ASSERT_TRUE(validate_structure(map).empty());
    const int kind = static_cast<int>(rng() % 9);
    HealthMap bad = map;
    Module& m = bad.modules[rng() % bad.modules.size()];
    ViolationKind expected;
    switch (kind) {
      case 0:
        bad.modules.push_back(Module{m.id, std::nullopt, Severity::kLow, {}, {}, {}});
        expected = ViolationKind::kDuplicateModuleId;
        break;
      case 1:
        m.parent = 999999;
        expected = ViolationKind::kUnknownParent;
        break;
      case 2:
        m.parent = m.id;
        expected = ViolationKind::kParentCycle;
        break;
      case 3:
        m.dependencies.push_back({999999, Severity::kLow});
        expected = ViolationKind::kUnknownDependent;
        break;
      case 4:
        m.dependencies.push_back({m.id, Severity::kLow});
        expected = ViolationKind::kSelfDependency;
        break;
      case 5: {
        Fault f;
        f.severity = Severity::kZero;
        f.detections.push_back({bad.modules.front().id, 0, 1, 0, 0});
        m.faults.push_back(f);
        expected = ViolationKind::kZeroSeverityFault;
        break;
      }
      case 6: {
        Fault f;
        f.detections.push_back({4000000, 0, 1, 0, 0});
        m.faults.push_back(f);
        expected = ViolationKind::kUnknownDetector;
        break;
      }
      case 7: {
        const DiagResourceId dup = [&] {
          for (const auto& x : bad.modules) {
            if (!x.diag_resources.empty()) return x.diag_resources.front().id;
          }
          return DiagResourceId{0};
        }();
        m.diag_resources.push_back({dup, 0});
        expected = ViolationKind::kDuplicateDiagId;
        break;
      }
      default: {
        Fault f;
        f.persistence = Persistence::kZero;
        m.faults.push_back(f);
        expected = ViolationKind::kZeroPersistenceFault;
        break;
      }
    }
    const auto v = validate_structure(bad);
    ASSERT_TRUE(std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == expected; }))
        << "missing " << to_string(expected);
  }
}

TEST(HmCore, ListsKeepInsertionOrder) {
  HealthMap map;
  add_module(map, 5, std::nullopt, Severity::kLow);
  for (DiagResourceId id : {9u, 3u, 7u}) add_diag_resource(map, 5, id, 0);
  const auto& r = map.find_module(5)->diag_resources;
  EXPECT_EQ(r[0].id, 9u);
  EXPECT_EQ(r[1].id, 3u);
  EXPECT_EQ(r[2].id, 7u);
}

TEST(Symbols, SidecarRoundTrip) {
  SymbolTable t;
  t.add({1, "CPU", std::nullopt});
  t.add({300, "CPU.C0", 0});
  const std::string text = format_sidecar(t);
  EXPECT_EQ(text, "1 CPU\n300 CPU.C0 core=0\n");
  const SymbolTable back = parse_sidecar(text);
  EXPECT_EQ(back.name_of(300), "CPU.C0");
  EXPECT_EQ(back.find(300)->core_id, 0u);
  EXPECT_THROW(back.name_of(2), Error);
}
