#pragma once

// Serialized Health Map (SHM): a contiguous, relocatable byte image.
//
//   header (32) | modules (25*M) | diag resources (13*R) | dependencies (9*D)
//   | dynamic part: faults (12 each) and detections (25 each), appended over time
//
// All integers are little-endian. Cross-record links are absolute byte offsets
// from the start of the image; offset 0 (inside the header) is the null link.
// Faults and detections may interleave once records are appended, so the
// dynamic part is only ever interpreted by walking the linked lists.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "healthmap/byte_io.hpp"
#include "healthmap/crc32.hpp"
#include "healthmap/error.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

using ShmImage = std::vector<std::uint8_t>;

namespace shm {

inline constexpr std::array<std::uint8_t, 4> kMagic{'S', 'H', 'M', '1'};
inline constexpr std::uint16_t kVersion = 1;

inline constexpr std::size_t kHeaderSize = 32;
inline constexpr std::size_t kModuleSize = 25;
inline constexpr std::size_t kDiagResourceSize = 13;
inline constexpr std::size_t kDependencySize = 9;
inline constexpr std::size_t kFaultSize = 12;
inline constexpr std::size_t kDetectionSize = 25;

// Header field offsets.
namespace hdr {
inline constexpr std::size_t kMagic = 0, kVersion = 4, kFlags = 6, kTotalLength = 8, kModules = 12,
                             kDiagResources = 14, kDependencies = 16, kFaults = 18, kDetections = 20,
                             kBodyCrc = 24, kHeaderCrc = 28;
}
// Record field offsets.
namespace mod {
inline constexpr std::size_t kId = 0, kParent = 4, kFirstDiag = 8, kFirstDep = 12, kFirstFault = 16,
                             kCriticality = 20, kNext = 21;
}
namespace diag {
inline constexpr std::size_t kId = 0, kOwner = 4, kNext = 8, kKind = 12;
}
namespace dep {
inline constexpr std::size_t kDependent = 0, kNext = 4, kSeverity = 8;
}
namespace flt {
inline constexpr std::size_t kNext = 0, kFirstDetection = 4, kSeverity = 8, kPersistence = 9,
                             kClassification = 10, kReserved = 11;
}
namespace det {
inline constexpr std::size_t kNext = 0, kDetector = 4, kTimestamp = 8, kCounter = 16, kPayload = 20,
                             kFlags = 24;
}

}  // namespace shm

struct EntityCounts {
  std::uint64_t modules = 0;
  std::uint64_t diag_resources = 0;
  std::uint64_t dependencies = 0;
  std::uint64_t faults = 0;
  std::uint64_t detections = 0;

  bool operator==(const EntityCounts&) const = default;

  std::uint64_t total_bytes() const {
    return shm::kHeaderSize + shm::kModuleSize * modules + shm::kDiagResourceSize * diag_resources +
           shm::kDependencySize * dependencies + shm::kFaultSize * faults + shm::kDetectionSize * detections;
  }
  std::uint64_t constant_part_end() const {
    return shm::kHeaderSize + shm::kModuleSize * modules + shm::kDiagResourceSize * diag_resources +
           shm::kDependencySize * dependencies;
  }
};

inline EntityCounts count_entities(const HealthMap& map) {
  return EntityCounts{map.module_count(), map.diag_resource_count(), map.dependency_count(), map.fault_count(),
                      map.detection_count()};
}

struct ShmHeader {
  std::uint16_t version = shm::kVersion;
  std::uint16_t flags = 0;
  std::uint32_t total_length = 0;
  EntityCounts counts;
  std::uint32_t body_crc = 0;
  std::uint32_t header_crc = 0;
};

namespace detail {

inline void check_count_width(const EntityCounts& c) {
  constexpr std::uint64_t k16 = 0xFFFF;
  if (c.modules > k16 || c.diag_resources > k16 || c.dependencies > k16 || c.faults > k16 ||
      c.detections > 0xFFFFFFFFull || c.total_bytes() > 0xFFFFFFFFull) {
    throw Error(ErrorCode::kCountOverflow, "entity counts exceed the header field widths");
  }
}

// Rewrites counts and length, then both checksums. Body first: the header
// checksum covers the body checksum field.
inline void seal_header(std::span<std::uint8_t> img, const EntityCounts& c) {
  using namespace shm;
  check_count_width(c);
  std::copy(kMagic.begin(), kMagic.end(), img.begin());
  bytes::store_le<std::uint16_t>(img, hdr::kVersion, kVersion);
  bytes::store_le<std::uint16_t>(img, hdr::kFlags, 0);
  bytes::store_le<std::uint32_t>(img, hdr::kTotalLength, static_cast<std::uint32_t>(img.size()));
  bytes::store_le<std::uint16_t>(img, hdr::kModules, static_cast<std::uint16_t>(c.modules));
  bytes::store_le<std::uint16_t>(img, hdr::kDiagResources, static_cast<std::uint16_t>(c.diag_resources));
  bytes::store_le<std::uint16_t>(img, hdr::kDependencies, static_cast<std::uint16_t>(c.dependencies));
  bytes::store_le<std::uint16_t>(img, hdr::kFaults, static_cast<std::uint16_t>(c.faults));
  bytes::store_le<std::uint32_t>(img, hdr::kDetections, static_cast<std::uint32_t>(c.detections));
  bytes::store_le<std::uint32_t>(img, hdr::kBodyCrc, crc32(img.subspan(kHeaderSize)));
  bytes::store_le<std::uint32_t>(img, hdr::kHeaderCrc, crc32(img.first(hdr::kHeaderCrc)));
}

}  // namespace detail

/// Lays `map` out as an SHM image. Records appear in module order; within a
/// module, each list keeps insertion order.
inline ShmImage serialize(const HealthMap& map) {
  using namespace shm;
  require_valid(map);
  const EntityCounts counts = count_entities(map);
  detail::check_count_width(counts);

  std::unordered_map<ModuleId, std::uint32_t> module_off;
  std::unordered_map<DiagResourceId, std::uint32_t> diag_off;
  std::size_t pos = kHeaderSize;
  for (const auto& m : map.modules) {
    module_off[m.id] = static_cast<std::uint32_t>(pos);
    pos += kModuleSize;
  }
  std::vector<std::uint32_t> first_diag(map.modules.size(), 0);
  for (std::size_t i = 0; i < map.modules.size(); ++i) {
    for (std::size_t j = 0; j < map.modules[i].diag_resources.size(); ++j) {
      if (j == 0) first_diag[i] = static_cast<std::uint32_t>(pos);
      diag_off[map.modules[i].diag_resources[j].id] = static_cast<std::uint32_t>(pos);
      pos += kDiagResourceSize;
    }
  }
  std::vector<std::uint32_t> first_dep(map.modules.size(), 0);
  for (std::size_t i = 0; i < map.modules.size(); ++i) {
    if (!map.modules[i].dependencies.empty()) first_dep[i] = static_cast<std::uint32_t>(pos);
    pos += kDependencySize * map.modules[i].dependencies.size();
  }
  std::vector<std::uint32_t> first_fault(map.modules.size(), 0);
  for (std::size_t i = 0; i < map.modules.size(); ++i) {
    if (!map.modules[i].faults.empty()) first_fault[i] = static_cast<std::uint32_t>(pos);
    pos += kFaultSize * map.modules[i].faults.size();
  }
  const std::size_t detections_begin = pos;

  ShmImage img(counts.total_bytes(), 0);
  std::span<std::uint8_t> out(img);

  pos = kHeaderSize;
  for (std::size_t i = 0; i < map.modules.size(); ++i) {
    const Module& m = map.modules[i];
    bytes::store_le<std::uint32_t>(out, pos + mod::kId, m.id);
    bytes::store_le<std::uint32_t>(out, pos + mod::kParent, m.parent ? module_off.at(*m.parent) : 0);
    bytes::store_le<std::uint32_t>(out, pos + mod::kFirstDiag, first_diag[i]);
    bytes::store_le<std::uint32_t>(out, pos + mod::kFirstDep, first_dep[i]);
    bytes::store_le<std::uint32_t>(out, pos + mod::kFirstFault, first_fault[i]);
    out[pos + mod::kCriticality] = static_cast<std::uint8_t>(m.criticality);
    const bool last = i + 1 == map.modules.size();
    bytes::store_le<std::uint32_t>(out, pos + mod::kNext, last ? 0 : static_cast<std::uint32_t>(pos + kModuleSize));
    pos += kModuleSize;
  }
  for (const Module& m : map.modules) {
    for (std::size_t j = 0; j < m.diag_resources.size(); ++j) {
      const bool last = j + 1 == m.diag_resources.size();
      bytes::store_le<std::uint32_t>(out, pos + diag::kId, m.diag_resources[j].id);
      bytes::store_le<std::uint32_t>(out, pos + diag::kOwner, module_off.at(m.id));
      bytes::store_le<std::uint32_t>(out, pos + diag::kNext,
                                     last ? 0 : static_cast<std::uint32_t>(pos + kDiagResourceSize));
      out[pos + diag::kKind] = m.diag_resources[j].kind;
      pos += kDiagResourceSize;
    }
  }
  for (const Module& m : map.modules) {
    for (std::size_t j = 0; j < m.dependencies.size(); ++j) {
      const bool last = j + 1 == m.dependencies.size();
      bytes::store_le<std::uint32_t>(out, pos + dep::kDependent, module_off.at(m.dependencies[j].dependent));
      bytes::store_le<std::uint32_t>(out, pos + dep::kNext,
                                     last ? 0 : static_cast<std::uint32_t>(pos + kDependencySize));
      out[pos + dep::kSeverity] = static_cast<std::uint8_t>(m.dependencies[j].severity);
      pos += kDependencySize;
    }
  }
  std::size_t det_pos = detections_begin;
  for (const Module& m : map.modules) {
    for (std::size_t j = 0; j < m.faults.size(); ++j) {
      const Fault& f = m.faults[j];
      const bool last = j + 1 == m.faults.size();
      bytes::store_le<std::uint32_t>(out, pos + flt::kNext, last ? 0 : static_cast<std::uint32_t>(pos + kFaultSize));
      bytes::store_le<std::uint32_t>(out, pos + flt::kFirstDetection,
                                     f.detections.empty() ? 0 : static_cast<std::uint32_t>(det_pos));
      out[pos + flt::kSeverity] = static_cast<std::uint8_t>(f.severity);
      out[pos + flt::kPersistence] = static_cast<std::uint8_t>(f.persistence);
      out[pos + flt::kClassification] = f.classification;
      out[pos + flt::kReserved] = 0;
      pos += kFaultSize;

      for (std::size_t k = 0; k < f.detections.size(); ++k) {
        const FaultDetection& d = f.detections[k];
        const bool last_det = k + 1 == f.detections.size();
        bytes::store_le<std::uint32_t>(out, det_pos + det::kNext,
                                       last_det ? 0 : static_cast<std::uint32_t>(det_pos + kDetectionSize));
        bytes::store_le<std::uint32_t>(out, det_pos + det::kDetector, diag_off.at(d.detector));
        bytes::store_le<std::uint64_t>(out, det_pos + det::kTimestamp, d.timestamp);
        bytes::store_le<std::uint32_t>(out, det_pos + det::kCounter, d.counter);
        bytes::store_le<std::uint32_t>(out, det_pos + det::kPayload, d.payload);
        out[det_pos + det::kFlags] = d.flags;
        det_pos += kDetectionSize;
      }
    }
  }
  detail::seal_header(out, counts);
  return img;
}

/// Where each record of a decoded image lives; needed to patch in place.
struct ImageLayout {
  ShmHeader header;
  std::vector<std::uint32_t> module_offsets;                            // module list order
  std::vector<std::vector<std::uint32_t>> fault_offsets;                // [module][fault]
  std::vector<std::vector<std::vector<std::uint32_t>>> detection_offsets;  // [module][fault][detection]
  std::unordered_map<DiagResourceId, std::uint32_t> diag_offsets;
};

struct DecodedImage {
  HealthMap map;
  ImageLayout layout;
};

/// Checks the header alone (magic, checksum, version, length) and returns it.
inline ShmHeader read_header(std::span<const std::uint8_t> buf) {
  using namespace shm;
  if (buf.size() < kHeaderSize) {
    throw Error(ErrorCode::kLengthMismatch, "image of " + std::to_string(buf.size()) + " bytes has no room for the header");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), buf.begin())) throw Error(ErrorCode::kBadMagic, "expected \"SHM1\"");
  ShmHeader h;
  h.header_crc = bytes::load_le<std::uint32_t>(buf, hdr::kHeaderCrc);
  if (crc32(buf.first(hdr::kHeaderCrc)) != h.header_crc) {
    throw Error(ErrorCode::kHeaderCrcMismatch, "header checksum does not match bytes [0, 28)");
  }
  h.version = bytes::load_le<std::uint16_t>(buf, hdr::kVersion);
  if (h.version != kVersion) throw Error(ErrorCode::kBadVersion, "version " + std::to_string(h.version));
  h.flags = bytes::load_le<std::uint16_t>(buf, hdr::kFlags);
  if (h.flags != 0) throw Error(ErrorCode::kBadFieldValue, "header flags must be 0");
  h.total_length = bytes::load_le<std::uint32_t>(buf, hdr::kTotalLength);
  h.counts.modules = bytes::load_le<std::uint16_t>(buf, hdr::kModules);
  h.counts.diag_resources = bytes::load_le<std::uint16_t>(buf, hdr::kDiagResources);
  h.counts.dependencies = bytes::load_le<std::uint16_t>(buf, hdr::kDependencies);
  h.counts.faults = bytes::load_le<std::uint16_t>(buf, hdr::kFaults);
  h.counts.detections = bytes::load_le<std::uint32_t>(buf, hdr::kDetections);
  h.body_crc = bytes::load_le<std::uint32_t>(buf, hdr::kBodyCrc);
  if (h.counts.total_bytes() != h.total_length) {
    throw Error(ErrorCode::kLengthMismatch, "totalLength " + std::to_string(h.total_length) +
                                                " disagrees with the entity counts (" +
                                                std::to_string(h.counts.total_bytes()) + ")");
  }
  if (buf.size() < h.total_length) {
    throw Error(ErrorCode::kLengthMismatch, "totalLength " + std::to_string(h.total_length) + " exceeds the " +
                                                std::to_string(buf.size()) + " available bytes");
  }
  return h;
}

namespace detail {

class ImageDecoder {
 public:
  explicit ImageDecoder(std::span<const std::uint8_t> buf) : header_(read_header(buf)), img_(buf.first(header_.total_length)) {
    using namespace shm;
    if (crc32(img_.subspan(kHeaderSize)) != header_.body_crc) {
      throw Error(ErrorCode::kBodyCrcMismatch, "body checksum does not match bytes [32, " +
                                                   std::to_string(header_.total_length) + ")");
    }
    modules_end_ = kHeaderSize + kModuleSize * header_.counts.modules;
    diag_end_ = modules_end_ + kDiagResourceSize * header_.counts.diag_resources;
    constant_end_ = diag_end_ + kDependencySize * header_.counts.dependencies;
  }

  DecodedImage run() {
    DecodedImage out;
    out.layout.header = header_;
    walk_modules(out);
    walk_diag_resources(out);
    walk_dependencies(out);
    walk_faults(out);
    check_dynamic_tiling();

    for (const auto& v : validate_structure(out.map)) {
      switch (v.kind) {
        case ViolationKind::kParentCycle: throw Error(ErrorCode::kLinkCycle, describe(v));
        case ViolationKind::kDuplicateModuleId:
        case ViolationKind::kDuplicateDiagId: throw Error(ErrorCode::kDuplicateId, describe(v));
        default: throw Error(ErrorCode::kBadFieldValue, describe(v));
      }
    }
    return out;
  }

 private:
  template <typename T>
  T field(std::size_t pos) const {
    return bytes::read_le<T>(img_, pos, ErrorCode::kOffsetOutOfBounds, "field");
  }

  // Validates a link into a fixed-stride section.
  void check_link(std::uint32_t off, std::size_t begin, std::size_t end, std::size_t stride, const char* what) const {
    if (off < shm::kHeaderSize || off >= img_.size() || img_.size() - off < stride) {
      throw Error(ErrorCode::kOffsetOutOfBounds, std::string(what) + " offset " + std::to_string(off));
    }
    if (off < begin || off >= end || (off - begin) % stride != 0) {
      throw Error(ErrorCode::kOffsetMisaligned, std::string(what) + " offset " + std::to_string(off) +
                                                    " is not a record boundary of its section");
    }
  }

  void check_dynamic_link(std::uint32_t off, std::size_t size, const char* what) const {
    if (off < shm::kHeaderSize || off >= img_.size() || img_.size() - off < size) {
      throw Error(ErrorCode::kOffsetOutOfBounds, std::string(what) + " offset " + std::to_string(off));
    }
    if (off < constant_end_) {
      throw Error(ErrorCode::kOffsetMisaligned, std::string(what) + " offset " + std::to_string(off) +
                                                    " points into the constant part");
    }
  }

  void visit(std::unordered_set<std::uint32_t>& seen, std::uint32_t off, const char* what) const {
    if (!seen.insert(off).second) {
      throw Error(ErrorCode::kLinkCycle, std::string(what) + " record at " + std::to_string(off) + " reached twice");
    }
  }

  static void check_count(std::uint64_t found, std::uint64_t declared, const char* what) {
    if (found != declared) {
      throw Error(ErrorCode::kCountMismatch, std::string(what) + ": header declares " + std::to_string(declared) +
                                                 ", lists reach " + std::to_string(found));
    }
  }

  template <typename Level>
  static Level level(std::uint8_t b, std::optional<Level> (*decode)(std::uint8_t), const char* what) {
    auto v = decode(b);
    if (!v) throw Error(ErrorCode::kBadFieldValue, std::string(what) + " byte " + std::to_string(b));
    return *v;
  }

  void walk_modules(DecodedImage& out) {
    using namespace shm;
    std::unordered_set<std::uint32_t> seen;
    std::uint32_t off = header_.counts.modules > 0 ? static_cast<std::uint32_t>(kHeaderSize) : 0;
    while (off != 0) {
      check_link(off, kHeaderSize, modules_end_, kModuleSize, "module");
      visit(seen, off, "module");
      module_index_[off] = out.layout.module_offsets.size();
      out.layout.module_offsets.push_back(off);
      off = field<std::uint32_t>(off + mod::kNext);
    }
    check_count(out.layout.module_offsets.size(), header_.counts.modules, "modules");

    for (std::uint32_t moff : out.layout.module_offsets) {
      Module m;
      m.id = field<std::uint32_t>(moff + mod::kId);
      m.criticality = level<Severity>(img_[moff + mod::kCriticality], severity_from_byte, "criticality");
      const auto parent = field<std::uint32_t>(moff + mod::kParent);
      if (parent != 0) {
        check_link(parent, kHeaderSize, modules_end_, kModuleSize, "parent");
        m.parent = field<std::uint32_t>(parent + mod::kId);
      }
      out.map.modules.push_back(std::move(m));
    }
    out.layout.fault_offsets.resize(out.map.modules.size());
    out.layout.detection_offsets.resize(out.map.modules.size());
  }

  void walk_diag_resources(DecodedImage& out) {
    using namespace shm;
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < out.map.modules.size(); ++i) {
      const std::uint32_t moff = out.layout.module_offsets[i];
      std::uint32_t off = field<std::uint32_t>(moff + mod::kFirstDiag);
      while (off != 0) {
        check_link(off, modules_end_, diag_end_, kDiagResourceSize, "diagnostic resource");
        visit(seen, off, "diagnostic resource");
        if (field<std::uint32_t>(off + diag::kOwner) != moff) {
          throw Error(ErrorCode::kInconsistentLink, "diagnostic resource at " + std::to_string(off) +
                                                        " names a different owner than the module listing it");
        }
        DiagResource r{field<std::uint32_t>(off + diag::kId), img_[off + diag::kKind]};
        diag_id_[off] = r.id;
        out.layout.diag_offsets[r.id] = off;
        out.map.modules[i].diag_resources.push_back(r);
        off = field<std::uint32_t>(off + diag::kNext);
      }
    }
    check_count(seen.size(), header_.counts.diag_resources, "diagnostic resources");
  }

  void walk_dependencies(DecodedImage& out) {
    using namespace shm;
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < out.map.modules.size(); ++i) {
      std::uint32_t off = field<std::uint32_t>(out.layout.module_offsets[i] + mod::kFirstDep);
      while (off != 0) {
        check_link(off, diag_end_, constant_end_, kDependencySize, "dependency");
        visit(seen, off, "dependency");
        const auto target = field<std::uint32_t>(off + dep::kDependent);
        check_link(target, kHeaderSize, modules_end_, kModuleSize, "dependent module");
        Dependency d;
        d.dependent = field<std::uint32_t>(target + mod::kId);
        d.severity = level<Severity>(img_[off + dep::kSeverity], severity_from_byte, "dependency severity");
        out.map.modules[i].dependencies.push_back(d);
        off = field<std::uint32_t>(off + dep::kNext);
      }
    }
    check_count(seen.size(), header_.counts.dependencies, "dependencies");
  }

  void walk_faults(DecodedImage& out) {
    using namespace shm;
    std::unordered_set<std::uint32_t> seen;
    std::uint64_t faults = 0;
    std::uint64_t detections = 0;
    for (std::size_t i = 0; i < out.map.modules.size(); ++i) {
      std::uint32_t off = field<std::uint32_t>(out.layout.module_offsets[i] + mod::kFirstFault);
      while (off != 0) {
        check_dynamic_link(off, kFaultSize, "fault");
        visit(seen, off, "fault");
        records_.emplace_back(off, kFaultSize);
        ++faults;
        Fault f;
        f.severity = level<Severity>(img_[off + flt::kSeverity], severity_from_byte, "fault severity");
        f.persistence = level<Persistence>(img_[off + flt::kPersistence], persistence_from_byte, "fault persistence");
        f.classification = img_[off + flt::kClassification];
        if (img_[off + flt::kReserved] != 0) throw Error(ErrorCode::kBadFieldValue, "fault reserved byte must be 0");

        std::vector<std::uint32_t> det_offsets;
        std::uint32_t doff = field<std::uint32_t>(off + flt::kFirstDetection);
        while (doff != 0) {
          check_dynamic_link(doff, kDetectionSize, "detection");
          visit(seen, doff, "detection");
          records_.emplace_back(doff, kDetectionSize);
          ++detections;
          const auto detector_off = field<std::uint32_t>(doff + det::kDetector);
          check_link(detector_off, modules_end_, diag_end_, kDiagResourceSize, "detector");
          FaultDetection d;
          d.detector = diag_id_.at(detector_off);
          d.timestamp = field<std::uint64_t>(doff + det::kTimestamp);
          d.counter = field<std::uint32_t>(doff + det::kCounter);
          d.payload = field<std::uint32_t>(doff + det::kPayload);
          d.flags = img_[doff + det::kFlags];
          if (d.counter == 0) throw Error(ErrorCode::kBadFieldValue, "detection counter 0 at " + std::to_string(doff));
          if ((d.flags & ~FaultDetection::kMergedFlag) != 0) {
            throw Error(ErrorCode::kBadFieldValue, "unknown detection flags at " + std::to_string(doff));
          }
          f.detections.push_back(d);
          det_offsets.push_back(doff);
          doff = field<std::uint32_t>(doff + det::kNext);
        }
        out.map.modules[i].faults.push_back(std::move(f));
        out.layout.fault_offsets[i].push_back(off);
        out.layout.detection_offsets[i].push_back(std::move(det_offsets));
        off = field<std::uint32_t>(off + flt::kNext);
      }
    }
    check_count(faults, header_.counts.faults, "faults");
    check_count(detections, header_.counts.detections, "detections");
  }

  // With the counts matching, the dynamic records tile their region exactly
  // iff no two of them overlap.
  void check_dynamic_tiling() {
    std::sort(records_.begin(), records_.end());
    std::size_t cursor = constant_end_;
    for (const auto& [off, size] : records_) {
      if (off != cursor) {
        throw Error(ErrorCode::kOffsetMisaligned, "dynamic record at " + std::to_string(off) +
                                                      " does not start at a record boundary (expected " +
                                                      std::to_string(cursor) + ")");
      }
      cursor += size;
    }
    if (cursor != img_.size()) throw Error(ErrorCode::kLengthMismatch, "dynamic part does not end at totalLength");
  }

  ShmHeader header_;
  std::span<const std::uint8_t> img_;
  std::size_t modules_end_ = 0;
  std::size_t diag_end_ = 0;
  std::size_t constant_end_ = 0;
  std::unordered_map<std::uint32_t, std::size_t> module_index_;
  std::unordered_map<std::uint32_t, DiagResourceId> diag_id_;
  std::vector<std::pair<std::uint32_t, std::size_t>> records_;
};

}  // namespace detail

/// Full validation plus the record locations. Never reads outside `buf`.
inline DecodedImage decode(std::span<const std::uint8_t> buf) { return detail::ImageDecoder(buf).run(); }

inline HealthMap deserialize(std::span<const std::uint8_t> buf) { return decode(buf).map; }

inline ShmHeader validate_image(std::span<const std::uint8_t> buf) { return decode(buf).layout.header; }

// ---------------------------------------------------------------------------
// Append-only update of the dynamic part.

struct NewFault {
  ModuleId module = 0;
  Severity severity = Severity::kLow;
  Persistence persistence = Persistence::kTransient;
  std::uint8_t classification = 0;
  std::vector<FaultDetection> detections;
};

struct NewDetection {
  FaultRef fault;
  FaultDetection detection;
};

struct DetectionPatch {
  FaultRef fault;
  std::size_t detection_index = 0;
  std::uint32_t counter = 1;
  std::uint8_t flags = 0;
};

struct FaultLevelPatch {
  FaultRef fault;
  Severity severity = Severity::kLow;
  Persistence persistence = Persistence::kTransient;
};

struct FaultDelta {
  std::vector<NewFault> faults;
  std::vector<NewDetection> detections;
  std::vector<DetectionPatch> counters;
  std::vector<FaultLevelPatch> levels;

  bool empty() const { return faults.empty() && detections.empty() && counters.empty() && levels.empty(); }
};

/// Computes the delta that turns `before` into `after`. Throws NotAppendOnly
/// when `after` is not an append-only extension of `before`.
inline FaultDelta diff_fault_data(const HealthMap& before, const HealthMap& after) {
  auto not_append_only = [](const std::string& why) { return Error(ErrorCode::kNotAppendOnly, why); };
  if (before.modules.size() != after.modules.size()) throw not_append_only("module set changed");
  FaultDelta delta;
  for (std::size_t i = 0; i < before.modules.size(); ++i) {
    const Module& b = before.modules[i];
    const Module& a = after.modules[i];
    if (a.id != b.id || a.parent != b.parent || a.criticality != b.criticality ||
        a.diag_resources != b.diag_resources || a.dependencies != b.dependencies) {
      throw not_append_only("constant data of module " + std::to_string(b.id) + " changed");
    }
    if (a.faults.size() < b.faults.size()) throw not_append_only("faults removed from module " + std::to_string(b.id));
    for (std::size_t j = 0; j < b.faults.size(); ++j) {
      const Fault& fb = b.faults[j];
      const Fault& fa = a.faults[j];
      const FaultRef ref{b.id, j};
      if (fa.classification != fb.classification || fa.detections.size() < fb.detections.size()) {
        throw not_append_only("fault " + std::to_string(j) + " of module " + std::to_string(b.id) + " rewritten");
      }
      if (fa.severity != fb.severity || fa.persistence != fb.persistence) {
        delta.levels.push_back({ref, fa.severity, fa.persistence});
      }
      for (std::size_t k = 0; k < fb.detections.size(); ++k) {
        const FaultDetection& db = fb.detections[k];
        const FaultDetection& da = fa.detections[k];
        if (da.detector != db.detector || da.timestamp != db.timestamp || da.payload != db.payload) {
          throw not_append_only("detection rewritten on module " + std::to_string(b.id));
        }
        if (da.counter != db.counter || da.flags != db.flags) delta.counters.push_back({ref, k, da.counter, da.flags});
      }
      for (std::size_t k = fb.detections.size(); k < fa.detections.size(); ++k) {
        delta.detections.push_back({ref, fa.detections[k]});
      }
    }
    for (std::size_t j = b.faults.size(); j < a.faults.size(); ++j) {
      const Fault& f = a.faults[j];
      delta.faults.push_back({a.id, f.severity, f.persistence, f.classification, f.detections});
    }
  }
  return delta;
}

/// Appends new fault data to the end of `image`. Earlier bytes change only
/// where a list tail's null link is spliced to a new record, where a
/// detection's counter/flags or a fault's severity/persistence is patched,
/// and in the header (counts, length, checksums).
inline ShmImage append_fault_data(std::span<const std::uint8_t> image, const FaultDelta& delta) {
  using namespace shm;
  DecodedImage decoded = decode(image);
  ImageLayout& layout = decoded.layout;
  const HealthMap& map = decoded.map;

  ShmImage out(image.begin(), image.begin() + layout.header.total_length);
  EntityCounts counts = layout.header.counts;

  auto module_slot = [&](ModuleId id) {
    auto idx = map.module_index(id);
    if (!idx) throw Error(ErrorCode::kUnknownModule, "module " + std::to_string(id) + " is not in the image");
    return *idx;
  };
  auto fault_offset = [&](const FaultRef& ref) -> std::pair<std::size_t, std::size_t> {
    const std::size_t mi = module_slot(ref.module);
    if (ref.index >= layout.fault_offsets[mi].size()) {
      throw Error(ErrorCode::kNotAppendOnly, "fault #" + std::to_string(ref.index) + " of module " +
                                                 std::to_string(ref.module) + " does not exist");
    }
    return {mi, ref.index};
  };
  auto link_word = [&](std::uint32_t at, std::uint32_t target) {
    bytes::store_le<std::uint32_t>(std::span<std::uint8_t>(out), at, target);
  };
  auto append_detection = [&](std::size_t mi, std::size_t fi, const FaultDetection& d) {
    auto diag = layout.diag_offsets.find(d.detector);
    if (diag == layout.diag_offsets.end()) {
      throw Error(ErrorCode::kUnknownDetector, "diagnostic resource " + std::to_string(d.detector));
    }
    if (d.counter == 0) throw Error(ErrorCode::kBadFieldValue, "detection counter must be >= 1");
    const auto off = static_cast<std::uint32_t>(out.size());
    bytes::append_le<std::uint32_t>(out, 0);
    bytes::append_le<std::uint32_t>(out, diag->second);
    bytes::append_le<std::uint64_t>(out, d.timestamp);
    bytes::append_le<std::uint32_t>(out, d.counter);
    bytes::append_le<std::uint32_t>(out, d.payload);
    out.push_back(d.flags);
    auto& dets = layout.detection_offsets[mi][fi];
    link_word(dets.empty() ? layout.fault_offsets[mi][fi] + flt::kFirstDetection : dets.back() + det::kNext, off);
    dets.push_back(off);
    ++counts.detections;
  };

  for (const NewFault& nf : delta.faults) {
    const std::size_t mi = module_slot(nf.module);
    if (nf.severity == Severity::kZero) throw Error(ErrorCode::kZeroSeverity, "appended fault");
    if (nf.persistence == Persistence::kZero) throw Error(ErrorCode::kBadFieldValue, "appended fault persistence");
    const auto off = static_cast<std::uint32_t>(out.size());
    bytes::append_le<std::uint32_t>(out, 0);
    bytes::append_le<std::uint32_t>(out, 0);
    out.push_back(static_cast<std::uint8_t>(nf.severity));
    out.push_back(static_cast<std::uint8_t>(nf.persistence));
    out.push_back(nf.classification);
    out.push_back(0);
    auto& faults = layout.fault_offsets[mi];
    link_word(faults.empty() ? layout.module_offsets[mi] + mod::kFirstFault : faults.back() + flt::kNext, off);
    faults.push_back(off);
    layout.detection_offsets[mi].emplace_back();
    ++counts.faults;
    for (const auto& d : nf.detections) append_detection(mi, faults.size() - 1, d);
  }
  for (const NewDetection& nd : delta.detections) {
    auto [mi, fi] = fault_offset(nd.fault);
    append_detection(mi, fi, nd.detection);
  }
  for (const DetectionPatch& p : delta.counters) {
    auto [mi, fi] = fault_offset(p.fault);
    const auto& dets = layout.detection_offsets[mi][fi];
    if (p.detection_index >= dets.size()) throw Error(ErrorCode::kNotAppendOnly, "detection index out of range");
    if (p.counter == 0) throw Error(ErrorCode::kBadFieldValue, "detection counter must be >= 1");
    bytes::store_le<std::uint32_t>(std::span<std::uint8_t>(out), dets[p.detection_index] + det::kCounter, p.counter);
    out[dets[p.detection_index] + det::kFlags] = p.flags;
  }
  for (const FaultLevelPatch& p : delta.levels) {
    auto [mi, fi] = fault_offset(p.fault);
    if (p.severity == Severity::kZero || p.persistence == Persistence::kZero) {
      throw Error(ErrorCode::kBadFieldValue, "fault levels must stay above ZERO");
    }
    const std::uint32_t off = layout.fault_offsets[mi][fi];
    out[off + flt::kSeverity] = static_cast<std::uint8_t>(p.severity);
    out[off + flt::kPersistence] = static_cast<std::uint8_t>(p.persistence);
  }

  detail::seal_header(std::span<std::uint8_t>(out), counts);
  return out;
}

}  // namespace healthmap
