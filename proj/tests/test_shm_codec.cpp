#include <gtest/gtest.h>
#include <zlib.h>

#include "support.hpp"

using namespace healthmap;

namespace {

ErrorCode decode_error(std::span<const std::uint8_t> img) {
  try {
    decode(img);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoError;  // sentinel: decoded fine
}

void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
}

std::uint32_t zcrc(const std::uint8_t* p, std::size_t n) { return static_cast<std::uint32_t>(::crc32(0L, p, static_cast<uInt>(n))); }

// Recomputes both checksums so structural checks are reached.
void reseal(std::vector<std::uint8_t>& img) {
  const std::uint32_t body = zcrc(img.data() + 32, img.size() - 32);
  for (int i = 0; i < 4; ++i) img[24 + i] = static_cast<std::uint8_t>(body >> (8 * i));
  const std::uint32_t head = zcrc(img.data(), 28);
  for (int i = 0; i < 4; ++i) img[28 + i] = static_cast<std::uint8_t>(head >> (8 * i));
}

HealthMap small_map() {
  HealthMap map;
  add_module(map, 7, std::nullopt, Severity::kHigh);
  add_diag_resource(map, 7, 9, 2);
  add_fault_with_detection(map, 7, Severity::kMedium, Persistence::kIntermittent, 5, 9, 0x0102030405060708ull,
                           0xDEADBEEF);
  return map;
}

}  // namespace

TEST(ShmCodec, SizesFromRecordArithmetic) {
  EXPECT_EQ(serialize(HealthMap{}).size(), 32u);
  HealthMap one;
  add_module(one, 1, std::nullopt, Severity::kZero);
  EXPECT_EQ(serialize(one).size(), 57u);
  EXPECT_EQ(serialize(synthesize_map(8)).size(), 82418u);
}

// Hand-assembled image for a one-module map; checksums from zlib.
TEST(ShmCodec, BitExactLayout) {
  std::vector<std::uint8_t> want{'S', 'H', 'M', '1'};
  put16(want, 1);
  put16(want, 0);
  put32(want, 107);
  put16(want, 1);
  put16(want, 1);
  put16(want, 0);
  put16(want, 1);
  put32(want, 1);
  put32(want, 0);
  put32(want, 0);
  // module @32
  put32(want, 7);
  put32(want, 0);
  put32(want, 57);
  put32(want, 0);
  put32(want, 70);
  want.push_back(3);
  put32(want, 0);
  // diag resource @57
  put32(want, 9);
  put32(want, 32);
  put32(want, 0);
  want.push_back(2);
  // fault @70
  put32(want, 0);
  put32(want, 82);
  want.insert(want.end(), {2, 2, 5, 0});
  // detection @82
  put32(want, 0);
  put32(want, 57);
  put32(want, 0x05060708);
  put32(want, 0x01020304);
  put32(want, 1);
  put32(want, 0xDEADBEEF);
  want.push_back(0);
  ASSERT_EQ(want.size(), 107u);
  reseal(want);

  EXPECT_EQ(serialize(small_map()), want);
  EXPECT_EQ(deserialize(want), small_map());
}

TEST(ShmCodec, HeaderFields) {
  const HealthMap map = synthesize_map(2);
  const auto img = serialize(map);
  const ShmHeader h = validate_image(img);
  EXPECT_EQ(h.counts, count_entities(map));
  EXPECT_EQ(h.total_length, img.size());
  EXPECT_EQ(h.total_length, h.counts.total_bytes());
  EXPECT_EQ(h.body_crc, zcrc(img.data() + 32, img.size() - 32));
  EXPECT_EQ(h.header_crc, zcrc(img.data(), 28));
}

TEST(ShmCodec, RoundTripProperty) {
  std::mt19937_64 rng(31);
  hmtest::MapShape shape;
  shape.max_modules = 50;
  for (int trial = 0; trial < 300; ++trial) {
    const HealthMap map = hmtest::random_map(rng, shape);
    const auto img = serialize(map);
    const HealthMap back = deserialize(img);
    ASSERT_EQ(back, map) << "trial " << trial;
    ASSERT_EQ(serialize(back), img);
  }
}

TEST(ShmCodec, ConstantPartPrecedesDynamicPart) {
  const HealthMap map = synthesize_map(1);
  const DecodedImage d = decode(serialize(map));
  const std::uint64_t constant_end = d.layout.header.counts.constant_part_end();
  for (const auto& per_module : d.layout.fault_offsets) {
    for (std::uint32_t off : per_module) EXPECT_GE(off, constant_end);
  }
  for (std::uint32_t off : d.layout.module_offsets) EXPECT_LT(off, constant_end);
}

TEST(ShmCodec, Relocatable) {
  std::mt19937_64 rng(32);
  const HealthMap map = hmtest::random_map(rng);
  const auto img = serialize(map);
  for (std::size_t shift : {1u, 3u, 7u, 64u, 4093u}) {
    std::vector<std::uint8_t> host(shift + img.size() + 5, 0xCC);
    std::copy(img.begin(), img.end(), host.begin() + static_cast<std::ptrdiff_t>(shift));
    const std::span<const std::uint8_t> view(host.data() + shift, img.size() + 5);
    EXPECT_EQ(deserialize(view), map);
  }
}

TEST(ShmCodec, HeaderAndBodyCorruption) {
  const auto img = serialize(small_map());
  for (std::size_t pos = 0; pos < img.size(); ++pos) {
    for (std::uint8_t x : {0x01, 0x80, 0xFF}) {
      auto bad = img;
      bad[pos] ^= x;
      const ErrorCode code = decode_error(bad);
      if (pos < 4) {
        EXPECT_EQ(code, ErrorCode::kBadMagic) << pos;
      } else if (pos < 32) {
        EXPECT_EQ(code, ErrorCode::kHeaderCrcMismatch) << pos;
      } else {
        EXPECT_EQ(code, ErrorCode::kBodyCrcMismatch) << pos;
      }
    }
  }
}

TEST(ShmCodec, TruncatedImage) {
  auto img = serialize(small_map());
  img.pop_back();
  EXPECT_EQ(decode_error(img), ErrorCode::kLengthMismatch);
  EXPECT_EQ(decode_error(std::span<const std::uint8_t>(img.data(), 10)), ErrorCode::kLengthMismatch);
}

TEST(ShmCodec, StructuralErrorsBehindValidChecksums) {
  const auto img = serialize(small_map());
  auto patch32 = [&](std::size_t at, std::uint32_t v) {
    auto bad = img;
    for (int i = 0; i < 4; ++i) bad[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
    reseal(bad);
    return decode_error(bad);
  };
  EXPECT_EQ(patch32(32 + 21, 32), ErrorCode::kLinkCycle);          // module next -> itself
  EXPECT_EQ(patch32(32 + 8, 5000), ErrorCode::kOffsetOutOfBounds);  // first diag beyond end
  EXPECT_EQ(patch32(32 + 8, 58), ErrorCode::kOffsetMisaligned);     // first diag mid-record
  EXPECT_EQ(patch32(82 + 16, 0), ErrorCode::kBadFieldValue);         // counter 0

  auto version = img;
  version[4] = 2;
  reseal(version);
  EXPECT_EQ(decode_error(version), ErrorCode::kBadVersion);

  auto length = img;
  length[8] = 106;
  reseal(length);
  EXPECT_EQ(decode_error(length), ErrorCode::kLengthMismatch);
}

// Mutations with repaired checksums must be rejected cleanly or decode to a
// valid map; never read out of bounds.
TEST(ShmCodec, FuzzResealedMutations) {
  std::mt19937_64 rng(33);
  const HealthMap base = hmtest::random_map(rng);
  std::vector<std::vector<std::uint8_t>> seeds{serialize(base), serialize(synthesize_map(1)), serialize(small_map())};
  int rejected = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    auto img = seeds[trial % seeds.size()];
    const int flips = 1 + static_cast<int>(rng() % 4);
    for (int f = 0; f < flips; ++f) img[32 + rng() % (img.size() - 32)] = static_cast<std::uint8_t>(rng());
    reseal(img);
    try {
      const HealthMap m = deserialize(img);
      EXPECT_TRUE(validate_structure(m).empty());
      EXPECT_EQ(deserialize(serialize(m)), m);
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_GT(rejected, 0);
}

TEST(ShmCodec, RandomGarbageNeverCrashes) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<std::uint8_t> img(rng() % 200);
    for (auto& b : img) b = static_cast<std::uint8_t>(rng());
    if (img.size() >= 32) {
      img[0] = 'S', img[1] = 'H', img[2] = 'M', img[3] = '1';
      reseal(img);
    }
    EXPECT_THROW(decode(img), Error);
  }
}

TEST(ShmCodec, CountOverflow) {
  HealthMap map;
  for (ModuleId id = 1; id <= 0x10000; ++id) map.modules.push_back(Module{id, std::nullopt, Severity::kLow, {}, {}, {}});
  try {
    serialize(map);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCountOverflow);
  }
}

TEST(ShmCodec, SerializeRejectsInvalidStructure) {
  HealthMap map = small_map();
  map.modules[0].parent = 7;
  try {
    serialize(map);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStructureInvalid);
  }
}

TEST(ShmAppend, OneFaultOneDetectionAdds37Bytes) {
  HealthMap before;
  add_module(before, 1, std::nullopt, Severity::kLow);
  add_diag_resource(before, 1, 2, 0);
  const auto img = serialize(before);
  HealthMap after = before;
  add_fault_with_detection(after, 1, Severity::kHigh, Persistence::kTransient, 1, 2, 1000, 0);
  const auto updated = append_fault_data(img, diff_fault_data(before, after));
  EXPECT_EQ(updated.size(), img.size() + 37);
  EXPECT_EQ(deserialize(updated), after);
  EXPECT_EQ(hmtest::check_append_only(img, updated), "");
}

TEST(ShmAppend, EmptyDeltaIsIdentity) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const auto img = serialize(hmtest::random_map(rng));
    EXPECT_EQ(append_fault_data(img, FaultDelta{}), img);
  }
}

// append(serialize(m), delta(f)) decodes to m + f, for random maps and random
// batches of reports, counter merges and escalations.
TEST(ShmAppend, CommutesWithInMemoryUpdate) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 300; ++trial) {
    HealthMap map = hmtest::random_map(rng);
    auto img = serialize(map);
    std::vector<DiagResourceId> detectors;
    for (const auto& m : map.modules) {
      for (const auto& r : m.diag_resources) detectors.push_back(r.id);
    }
    for (int step = 0; step < 4; ++step) {
      HealthMap next = map;
      const int reports = 1 + static_cast<int>(rng() % 4);
      for (int r = 0; r < reports; ++r) {
        DetectionReport rep;
        rep.detector = detectors[rng() % detectors.size()];
        rep.severity = hmtest::random_level<Severity>(rng, 1);
        rep.classification = static_cast<std::uint8_t>(rng() % 3);
        rep.timestamp = 10'000'000ull * static_cast<std::uint64_t>(step) + rng() % 3'000'000;
        report_detection(next, rep, ClassifierConfig{});
      }
      const auto updated = append_fault_data(img, diff_fault_data(map, next));
      ASSERT_EQ(hmtest::check_append_only(img, updated), "") << "trial " << trial;
      ASSERT_EQ(deserialize(updated), next) << "trial " << trial;
      map = std::move(next);
      img = updated;
    }
  }
}

TEST(ShmAppend, NonAppendChangesAreRejected) {
  HealthMap before = small_map();
  HealthMap removed = before;
  removed.modules[0].faults.clear();
  EXPECT_THROW(diff_fault_data(before, removed), Error);
  HealthMap rewritten = before;
  rewritten.modules[0].faults[0].detections[0].payload = 1;
  EXPECT_THROW(diff_fault_data(before, rewritten), Error);
  HealthMap reparented = before;
  reparented.modules[0].criticality = Severity::kLow;
  EXPECT_THROW(diff_fault_data(before, reparented), Error);
}
