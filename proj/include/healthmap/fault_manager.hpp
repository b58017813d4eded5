#pragma once

// Run-time ingestion of detection reports: match each report to a fault of
// the detector's owner module, merge bursts into detection counters,
// classify persistence from the accumulated history, and keep the Resource
// Map current. Pruning compacts fault history on request.

#include <charconv>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "healthmap/error.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/resource_map.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct DetectionReport {
  DiagResourceId detector = 0;
  Severity severity = Severity::kLow;
  std::uint8_t classification = 0;
  Timestamp timestamp = 0;
  std::uint32_t payload = 0;

  bool operator==(const DetectionReport&) const = default;
};

struct ClassifierConfig {
  Timestamp merge_window_us = 1'000'000;
  std::uint64_t intermittent_threshold = 3;
  std::uint64_t permanent_threshold = 10;

  void validate() const {
    if (intermittent_threshold == 0 || intermittent_threshold > permanent_threshold) {
      throw Error(ErrorCode::kParseError, "classifier thresholds need 0 < intermittent <= permanent");
    }
  }
};

/// Persistence implied by a total event count.
inline Persistence classify_persistence(std::uint64_t events, const ClassifierConfig& config) {
  if (events >= config.permanent_threshold) return Persistence::kPermanent;
  if (events >= config.intermittent_threshold) return Persistence::kIntermittent;
  return Persistence::kTransient;
}

struct ReportOutcome {
  FaultRef fault;
  bool created = false;         // a new fault record was opened
  bool counter_merged = false;  // the event was folded into an existing detection
};

namespace detail {

// Shared by local reports and summaries ingested from child nodes. With
// `persistence` set, it replaces the count-based classifier (the sender has
// already classified the fault).
inline ReportOutcome record_detection(HealthMap& map, std::size_t owner_index, const DetectionReport& report,
                                      const ClassifierConfig& config, std::optional<Persistence> persistence,
                                      ResourceMap* rm) {
  Module& owner = map.modules[owner_index];
  ReportOutcome outcome;

  Fault* fault = nullptr;
  for (std::size_t j = owner.faults.size(); j-- > 0;) {
    if (owner.faults[j].classification == report.classification) {
      fault = &owner.faults[j];
      outcome.fault = FaultRef{owner.id, j};
      break;
    }
  }

  const FaultDetection fresh{report.detector, report.timestamp, 1, report.payload, 0};
  if (fault == nullptr) {
    Fault f;
    f.severity = report.severity;
    f.persistence = Persistence::kTransient;
    f.classification = report.classification;
    f.detections.push_back(fresh);
    owner.faults.push_back(std::move(f));
    fault = &owner.faults.back();
    outcome.fault = FaultRef{owner.id, owner.faults.size() - 1};
    outcome.created = true;
  } else {
    FaultDetection* latest = fault->detections.empty() ? nullptr : &fault->detections.back();
    const bool same_burst = latest != nullptr && latest->detector == report.detector &&
                            report.timestamp >= latest->timestamp &&
                            report.timestamp - latest->timestamp <= config.merge_window_us &&
                            latest->counter < std::numeric_limits<std::uint32_t>::max();
    if (same_burst) {
      ++latest->counter;
      outcome.counter_merged = true;
    } else {
      fault->detections.push_back(fresh);
    }
    fault->severity = max_level(fault->severity, report.severity);
  }

  const Persistence classified = persistence ? *persistence : classify_persistence(fault->event_count(), config);
  fault->persistence = max_level(fault->persistence, classified);

  if (rm != nullptr) rm->update_single_fault(owner.id, fault->severity, fault->persistence, ModuleStatus::kOwnFault);
  return outcome;
}

inline void check_report(const HealthMap& map, const DetectionReport& report) {
  if (report.severity == Severity::kZero) throw Error(ErrorCode::kZeroSeverity, "detection reports need severity above ZERO");
  if (!map.find_detector(report.detector)) {
    throw Error(ErrorCode::kUnknownDetector, "diagnostic resource " + std::to_string(report.detector));
  }
}

}  // namespace detail

/// Ingests one report. The fault is keyed by (owner module, classification);
/// a report from the same detector within the merge window of the latest
/// detection increments its counter instead of adding a record. Severity
/// aggregates by max; persistence never decreases.
inline ReportOutcome report_detection(HealthMap& map, const DetectionReport& report, const ClassifierConfig& config,
                                      ResourceMap* rm = nullptr) {
  detail::check_report(map, report);
  return detail::record_detection(map, map.find_detector(report.detector)->module_index, report, config,
                                  std::nullopt, rm);
}

inline ReportOutcome report_detection(HealthMap& map, const DetectionReport& report, const ClassifierConfig& config,
                                      ResourceMap& rm) {
  return report_detection(map, report, config, &rm);
}

/// Records a fault already classified elsewhere (a child node's summary) on
/// `module`, detected through `report.detector`.
inline ReportOutcome record_classified_fault(HealthMap& map, ModuleId module, const DetectionReport& report,
                                             Persistence persistence, const ClassifierConfig& config,
                                             ResourceMap* rm = nullptr) {
  detail::check_report(map, report);
  auto index = map.module_index(module);
  if (!index) throw Error(ErrorCode::kUnknownModule, "module " + std::to_string(module));
  if (persistence == Persistence::kZero) persistence = Persistence::kTransient;
  return detail::record_detection(map, *index, report, config, persistence, rm);
}

struct PrunePolicy {
  bool merge_faults = true;
  bool merge_detections = true;
};

/// Combines identical faults of a module and detections of one fault that
/// share a detector. Returns the number of records removed.
inline std::size_t prune(HealthMap& map, const PrunePolicy& policy = {}) {
  std::size_t merged = 0;
  for (Module& m : map.modules) {
    if (policy.merge_faults) {
      std::vector<Fault> kept;
      for (Fault& f : m.faults) {
        auto same = std::find_if(kept.begin(), kept.end(), [&](const Fault& k) {
          return k.severity == f.severity && k.persistence == f.persistence && k.classification == f.classification;
        });
        if (same == kept.end()) {
          kept.push_back(std::move(f));
        } else {
          same->detections.insert(same->detections.end(), f.detections.begin(), f.detections.end());
          ++merged;
        }
      }
      m.faults = std::move(kept);
    }
    if (policy.merge_detections) {
      for (Fault& f : m.faults) {
        std::vector<FaultDetection> kept;
        for (const FaultDetection& d : f.detections) {
          auto same = std::find_if(kept.begin(), kept.end(), [&](const FaultDetection& k) {
            return k.detector == d.detector &&
                   std::uint64_t{k.counter} + d.counter <= std::numeric_limits<std::uint32_t>::max();
          });
          if (same == kept.end()) {
            kept.push_back(d);
            continue;
          }
          if (d.timestamp < same->timestamp) {
            same->timestamp = d.timestamp;
            same->payload = d.payload;
          }
          same->counter += d.counter;
          same->flags |= FaultDetection::kMergedFlag;
          ++merged;
        }
        f.detections = std::move(kept);
      }
    }
  }
  return merged;
}

/// Sum of all detection counters in the map.
inline std::uint64_t total_event_count(const HealthMap& map) {
  std::uint64_t n = 0;
  for (const auto& m : map.modules) {
    for (const auto& f : m.faults) n += f.event_count();
  }
  return n;
}

/// Parses `detect <detectorId> sev=<SEV> class=<0-255> t=<us> [payload=<hex>]`.
inline DetectionReport parse_report_line(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string word;
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::kParseError, "detection report '" + std::string(line) + "': " + why);
  };
  if (!(in >> word) || word != "detect") throw fail("must start with 'detect'");
  if (!(in >> word)) throw fail("missing detector id");
  auto detector = detail::parse_u32(word);
  if (!detector) throw fail("bad detector id");

  DetectionReport report;
  report.detector = *detector;
  bool have_sev = false, have_class = false, have_t = false;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw fail("expected key=value, got '" + word + "'");
    const std::string_view key = std::string_view(word).substr(0, eq);
    const std::string_view value = std::string_view(word).substr(eq + 1);
    if (key == "sev") {
      auto s = parse_severity(value);
      if (!s) throw fail("bad severity");
      report.severity = *s;
      have_sev = true;
    } else if (key == "class") {
      auto c = detail::parse_u32(value);
      if (!c || *c > 255) throw fail("class must be 0-255");
      report.classification = static_cast<std::uint8_t>(*c);
      have_class = true;
    } else if (key == "t") {
      std::uint64_t t = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), t);
      if (ec != std::errc{} || p != value.data() + value.size() || value.empty()) throw fail("bad timestamp");
      report.timestamp = t;
      have_t = true;
    } else if (key == "payload") {
      std::string_view hex = value;
      if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
      std::uint32_t v = 0;
      auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
      if (ec != std::errc{} || p != hex.data() + hex.size() || hex.empty()) throw fail("bad payload");
      report.payload = v;
    } else {
      throw fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_sev || !have_class || !have_t) throw fail("sev=, class= and t= are required");
  return report;
}

}  // namespace healthmap
