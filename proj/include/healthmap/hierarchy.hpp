#pragma once

// Hierarchical health management: Resource Map summaries travel upward as
// RmSummaryMessage frames and become fault input of the parent node's
// Health Map.
//
// Frame (little-endian):
//   "RMS1" | version u16 (=1) | nodeId u32 | entryCount u16 | entryCount x 7-byte entries | crc u32
// The trailing CRC-32 covers every preceding byte.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "healthmap/byte_io.hpp"
#include "healthmap/compiler.hpp"
#include "healthmap/crc32.hpp"
#include "healthmap/error.hpp"
#include "healthmap/fault_manager.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/resource_map.hpp"
#include "healthmap/symbols.hpp"

namespace healthmap {

using NodeId = std::uint32_t;

namespace rms {
inline constexpr std::array<std::uint8_t, 4> kMagic{'R', 'M', 'S', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kPrefixSize = 12;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kMaxEntries = 0xFFFF;
// Fault class used for faults ingested from child summaries.
inline constexpr std::uint8_t kSummaryClassification = 0xFF;
}  // namespace rms

struct RmSummary {
  NodeId node_id = 0;
  std::vector<RmEntry> entries;
  bool operator==(const RmSummary&) const = default;
};

inline std::vector<std::uint8_t> encode_summary(NodeId node_id, std::span<const RmEntry> entries) {
  if (entries.size() > rms::kMaxEntries) {
    throw Error(ErrorCode::kTooManyEntries, std::to_string(entries.size()) + " entries do not fit a summary");
  }
  std::vector<std::uint8_t> out(rms::kMagic.begin(), rms::kMagic.end());
  out.reserve(rms::kPrefixSize + entries.size() * RmEntry::kEncodedSize + rms::kCrcSize);
  bytes::append_le<std::uint16_t>(out, rms::kVersion);
  bytes::append_le<std::uint32_t>(out, node_id);
  bytes::append_le<std::uint16_t>(out, static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) encode_entry(out, e);
  bytes::append_le<std::uint32_t>(out, crc32(out));
  return out;
}

inline std::vector<std::uint8_t> encode_summary(NodeId node_id, const ResourceMap& rm) {
  const auto entries = rm.entries();
  return encode_summary(node_id, std::span<const RmEntry>(entries));
}

inline RmSummary decode_summary(std::span<const std::uint8_t> msg) {
  if (msg.size() < rms::kPrefixSize + rms::kCrcSize) {
    throw Error(ErrorCode::kMalformedMessage, "summary of " + std::to_string(msg.size()) + " bytes is too short");
  }
  const auto body = msg.first(msg.size() - rms::kCrcSize);
  if (crc32(body) != bytes::load_le<std::uint32_t>(msg, body.size())) {
    throw Error(ErrorCode::kCrcMismatch, "summary checksum does not match");
  }
  if (!std::equal(rms::kMagic.begin(), rms::kMagic.end(), msg.begin())) {
    throw Error(ErrorCode::kBadMagic, "expected \"RMS1\"");
  }
  const auto version = bytes::load_le<std::uint16_t>(msg, 4);
  if (version != rms::kVersion) throw Error(ErrorCode::kBadVersion, "summary version " + std::to_string(version));
  RmSummary out;
  out.node_id = bytes::load_le<std::uint32_t>(msg, 6);
  const std::size_t count = bytes::load_le<std::uint16_t>(msg, 10);
  if (msg.size() != rms::kPrefixSize + count * RmEntry::kEncodedSize + rms::kCrcSize) {
    throw Error(ErrorCode::kMalformedMessage, "length " + std::to_string(msg.size()) + " does not match " +
                                                  std::to_string(count) + " entries");
  }
  out.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.entries.push_back(decode_entry(msg, rms::kPrefixSize + i * RmEntry::kEncodedSize, ErrorCode::kMalformedMessage));
  }
  return out;
}

/// How child-node modules land in the parent's Health Map, and which parent
/// instrument stands in as each child's downlink detector.
struct ChildMapping {
  std::map<std::pair<NodeId, ModuleId>, ModuleId> targets;
  std::map<NodeId, DiagResourceId> downlinks;

  bool knows(NodeId node) const {
    if (downlinks.contains(node)) return true;
    auto it = targets.lower_bound({node, 0});
    return it != targets.end() && it->first.first == node;
  }
};

/// Lines: `child <nodeId> <childModuleId> -> <parentModuleId>` and
/// `downlink <nodeId> <instrumentId>`; '#' starts a comment line.
inline ChildMapping parse_mapping(std::string_view text) {
  ChildMapping mapping;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word) || word.starts_with('#')) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kParseError, "mapping line " + std::to_string(lineno) + ": " + why);
    };
    auto number = [&](const char* what) {
      std::string token;
      if (!(fields >> token)) throw fail(std::string("missing ") + what);
      auto v = detail::parse_u32(token);
      if (!v) throw fail(std::string("bad ") + what + " '" + token + "'");
      return *v;
    };
    if (word == "child") {
      const NodeId node = number("node id");
      const ModuleId child = number("child module id");
      std::string arrow;
      if (!(fields >> arrow) || arrow != "->") throw fail("expected '->'");
      const ModuleId parent = number("parent module id");
      if (!mapping.targets.emplace(std::pair{node, child}, parent).second) {
        throw Error(ErrorCode::kDuplicateId, "mapping line " + std::to_string(lineno) + ": child " +
                                                 std::to_string(node) + "/" + std::to_string(child) + " mapped twice");
      }
    } else if (word == "downlink") {
      const NodeId node = number("node id");
      const DiagResourceId inst = number("instrument id");
      if (!mapping.downlinks.emplace(node, inst).second) throw fail("downlink for node declared twice");
    } else {
      throw fail("unknown directive '" + word + "'");
    }
    if (fields >> word) throw fail("trailing text '" + word + "'");
  }
  return mapping;
}

/// Worst values already ingested per (child node, child module); a summary
/// entry is recorded only when it is worse, so periodic re-sends of an
/// unchanged summary leave the parent untouched.
struct UplinkState {
  std::map<std::pair<NodeId, ModuleId>, std::pair<Severity, Persistence>> ingested;
};

struct IngestResult {
  std::size_t applied = 0;
  std::size_t unchanged = 0;
  std::size_t unmapped = 0;
};

inline IngestResult ingest_summary(HealthMap& parent_map, ResourceMap& parent_rm, std::span<const std::uint8_t> message,
                                   const ChildMapping& mapping, Timestamp timestamp, UplinkState& state,
                                   const ClassifierConfig& config = {}) {
  const RmSummary summary = decode_summary(message);
  if (!mapping.knows(summary.node_id)) {
    throw Error(ErrorCode::kUnknownNode, "summary from unmapped node " + std::to_string(summary.node_id));
  }
  auto downlink = mapping.downlinks.find(summary.node_id);
  IngestResult result;
  for (const RmEntry& e : summary.entries) {
    if (e.worst_severity == Severity::kZero) continue;
    auto target = mapping.targets.find({summary.node_id, e.module_id});
    if (target == mapping.targets.end()) {
      ++result.unmapped;
      continue;
    }
    if (downlink == mapping.downlinks.end()) {
      throw Error(ErrorCode::kUnknownNode, "node " + std::to_string(summary.node_id) + " has no downlink instrument");
    }
    auto [slot, fresh] = state.ingested.try_emplace({summary.node_id, e.module_id}, Severity::kZero, Persistence::kZero);
    auto& [seen_s, seen_p] = slot->second;
    if (!fresh && e.worst_severity <= seen_s && e.worst_persistence <= seen_p) {
      ++result.unchanged;
      continue;
    }
    seen_s = max_level(seen_s, e.worst_severity);
    seen_p = max_level(seen_p, e.worst_persistence);
    DetectionReport report{downlink->second, e.worst_severity, rms::kSummaryClassification, timestamp, e.module_id};
    record_classified_fault(parent_map, target->second, report, e.worst_persistence, config, &parent_rm);
    ++result.applied;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Discrete-event simulation of a node tree.

struct NodeSpec {
  NodeId id = 0;
  std::string hm_xml;        // Health Map description text
  std::string mapping_text;  // child mapping text; empty for leaves
  Timestamp period = 0;      // report period, microseconds
  std::optional<NodeId> parent;
};

struct ScheduledReport {
  Timestamp at = 0;
  NodeId node = 0;
  DetectionReport report;
};

struct Scenario {
  std::vector<NodeSpec> nodes;
  std::vector<ScheduledReport> events;
  Timestamp duration = 0;
};

struct TimelineRecord {
  Timestamp at = 0;
  NodeId node = 0;
  std::vector<RmEntry> entries;
  bool operator==(const TimelineRecord&) const = default;
};

struct MessageRecord {
  Timestamp at = 0;
  NodeId from = 0;
  NodeId to = 0;
  std::vector<std::uint8_t> bytes;
  bool operator==(const MessageRecord&) const = default;
};

struct NodeOutcome {
  NodeId id = 0;
  HealthMap map;
  ResourceMap rm;
  SymbolTable symbols;
};

struct SimulationResult {
  std::vector<TimelineRecord> timeline;
  std::vector<MessageRecord> messages;
  std::vector<NodeOutcome> nodes;  // sorted by node id

  const NodeOutcome& node(NodeId id) const {
    for (const auto& n : nodes) {
      if (n.id == id) return n;
    }
    throw Error(ErrorCode::kUnknownNode, "node " + std::to_string(id));
  }
};

namespace detail {
inline Error scenario_error(const std::string& why) { return Error(ErrorCode::kScenarioInvalid, why); }

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}
}  // namespace detail

/// Parses a scenario file. Relative paths resolve against `base_dir`; the
/// referenced files are read immediately.
///   node <id> hm=<xml> [map=<file>] period=<us> parent=<id|none>
///   at <us> node <id> detect <detectorId> sev=<SEV> class=<n> [payload=<hex>]
///   duration <us>
inline Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  Scenario sc;
  bool have_duration = false;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word) || word.starts_with('#')) continue;
    auto fail = [&](const std::string& why) {
      return detail::scenario_error("scenario line " + std::to_string(lineno) + ": " + why);
    };
    auto number64 = [&](const std::string& token) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc{} || p != token.data() + token.size() || token.empty()) throw fail("bad number '" + token + "'");
      return v;
    };
    if (word == "node") {
      NodeSpec n;
      std::string id;
      if (!(fields >> id)) throw fail("missing node id");
      n.id = static_cast<NodeId>(number64(id));
      bool have_hm = false, have_period = false, have_parent = false;
      while (fields >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw fail("expected key=value, got '" + word + "'");
        const std::string key = word.substr(0, eq);
        const std::string value = word.substr(eq + 1);
        if (key == "hm") {
          n.hm_xml = detail::read_text_file(base_dir / value);
          have_hm = true;
        } else if (key == "map") {
          n.mapping_text = detail::read_text_file(base_dir / value);
        } else if (key == "period") {
          n.period = number64(value);
          have_period = true;
        } else if (key == "parent") {
          if (value != "none") n.parent = static_cast<NodeId>(number64(value));
          have_parent = true;
        } else {
          throw fail("unknown key '" + key + "'");
        }
      }
      if (!have_hm || !have_period || !have_parent) throw fail("node needs hm=, period= and parent=");
      sc.nodes.push_back(std::move(n));
    } else if (word == "at") {
      std::string t, node_kw, node_id;
      if (!(fields >> t >> node_kw >> node_id) || node_kw != "node") throw fail("expected 'at <us> node <id> detect ...'");
      ScheduledReport ev;
      ev.at = number64(t);
      ev.node = static_cast<NodeId>(number64(node_id));
      std::string rest;
      std::getline(fields, rest);
      if (rest.find(" t=") == std::string::npos) rest += " t=" + std::to_string(ev.at);
      try {
        ev.report = parse_report_line(rest);
      } catch (const Error& e) {
        throw fail(e.what());
      }
      sc.events.push_back(ev);
    } else if (word == "duration") {
      std::string t;
      if (!(fields >> t)) throw fail("missing duration");
      sc.duration = number64(t);
      have_duration = true;
    } else {
      throw fail("unknown directive '" + word + "'");
    }
  }
  if (!have_duration) throw detail::scenario_error("scenario needs a 'duration <us>' line");
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(detail::read_text_file(path), path.parent_path());
}

/// Runs the scenario. Events at equal times are ordered by phase (detections,
/// then report emissions, then message deliveries), then node id, then
/// insertion sequence, so the output is a pure function of the scenario.
inline SimulationResult simulate(const Scenario& scenario, const ClassifierConfig& config = {}) {
  struct NodeState {
    const NodeSpec* spec = nullptr;
    HealthMap map;
    ResourceMap rm;
    SymbolTable symbols;
    ChildMapping mapping;
    UplinkState uplink;
  };
  std::map<NodeId, NodeState> nodes;
  for (const auto& spec : scenario.nodes) {
    if (spec.period == 0) throw detail::scenario_error("node " + std::to_string(spec.id) + " has period 0");
    NodeState st;
    st.spec = &spec;
    try {
      CompiledHealthMap compiled = compile(spec.hm_xml);
      st.map = std::move(compiled.map);
      st.symbols = std::move(compiled.symbols);
      st.mapping = parse_mapping(spec.mapping_text);
    } catch (const Error& e) {
      throw detail::scenario_error("node " + std::to_string(spec.id) + ": " + e.what());
    }
    st.rm = init_resource_map(st.map);
    if (!nodes.emplace(spec.id, std::move(st)).second) {
      throw detail::scenario_error("node " + std::to_string(spec.id) + " declared twice");
    }
  }
  for (const auto& [id, st] : nodes) {
    std::optional<NodeId> cur = st.spec->parent;
    for (std::size_t steps = 0; cur; ++steps) {
      auto it = nodes.find(*cur);
      if (it == nodes.end()) throw detail::scenario_error("node " + std::to_string(id) + " has unknown parent " + std::to_string(*cur));
      if (*cur == id || steps > nodes.size()) throw detail::scenario_error("node tree has a cycle through " + std::to_string(id));
      cur = it->second.spec->parent;
    }
    if (st.spec->parent) {
      const auto& pm = nodes.at(*st.spec->parent).mapping;
      auto dl = pm.downlinks.find(id);
      if (dl != pm.downlinks.end() && !nodes.at(*st.spec->parent).map.find_detector(dl->second)) {
        throw detail::scenario_error("downlink instrument " + std::to_string(dl->second) + " for node " +
                                     std::to_string(id) + " is not in the parent Health Map");
      }
    }
  }
  for (const auto& ev : scenario.events) {
    auto it = nodes.find(ev.node);
    if (it == nodes.end()) throw detail::scenario_error("event addresses unknown node " + std::to_string(ev.node));
    if (!it->second.map.find_detector(ev.report.detector)) {
      throw detail::scenario_error("event on node " + std::to_string(ev.node) + " names unknown detector " +
                                   std::to_string(ev.report.detector));
    }
  }

  enum Phase : int { kDetection = 0, kEmission = 1, kDelivery = 2 };
  struct Event {
    Timestamp at;
    int phase;
    NodeId node;
    std::uint64_t seq;
    std::size_t payload;  // event index, or message index for deliveries
    auto key() const { return std::tie(at, phase, node, seq); }
    bool operator>(const Event& o) const { return key() > o.key(); }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < scenario.events.size(); ++i) {
    const auto& ev = scenario.events[i];
    if (ev.at <= scenario.duration) queue.push({ev.at, kDetection, ev.node, seq++, i});
  }
  for (const auto& [id, st] : nodes) {
    if (st.spec->period <= scenario.duration) queue.push({st.spec->period, kEmission, id, seq++, 0});
  }

  SimulationResult result;
  while (!queue.empty()) {
    const Event ev = queue.top();
    queue.pop();
    NodeState& st = nodes.at(ev.node);
    switch (ev.phase) {
      case kDetection: {
        DetectionReport report = scenario.events[ev.payload].report;
        report.timestamp = ev.at;
        report_detection(st.map, report, config, st.rm);
        break;
      }
      case kEmission: {
        auto entries = st.rm.entries();
        if (st.spec->parent) {
          result.messages.push_back({ev.at, ev.node, *st.spec->parent, encode_summary(ev.node, std::span<const RmEntry>(entries))});
          queue.push({ev.at, kDelivery, *st.spec->parent, seq++, result.messages.size() - 1});
        }
        result.timeline.push_back({ev.at, ev.node, std::move(entries)});
        if (ev.at + st.spec->period <= scenario.duration) queue.push({ev.at + st.spec->period, kEmission, ev.node, seq++, 0});
        break;
      }
      case kDelivery: {
        const MessageRecord& msg = result.messages[ev.payload];
        ingest_summary(st.map, st.rm, msg.bytes, st.mapping, ev.at, st.uplink, config);
        break;
      }
    }
  }
  for (auto& [id, st] : nodes) result.nodes.push_back({id, std::move(st.map), std::move(st.rm), std::move(st.symbols)});
  return result;
}

inline std::string render_timeline(const SimulationResult& result) {
  std::string out;
  for (const auto& rec : result.timeline) {
    const SymbolTable& names = result.node(rec.node).symbols;
    out += "t=" + std::to_string(rec.at) + " node=" + std::to_string(rec.node) + "\n";
    for (const auto& e : rec.entries) {
      const SymbolEntry* sym = names.find(e.module_id);
      out += "  " + (sym ? sym->name : "#" + std::to_string(e.module_id)) + " " +
             std::string(to_string(e.worst_severity)) + " " + std::string(to_string(e.worst_persistence)) + " " +
             std::string(to_string(e.status)) + "\n";
    }
  }
  return out;
}

inline std::string render_message_log(const SimulationResult& result) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (const auto& m : result.messages) {
    out += "t=" + std::to_string(m.at) + " from=" + std::to_string(m.from) + " to=" + std::to_string(m.to) +
           " bytes=" + std::to_string(m.bytes.size()) + " ";
    for (std::uint8_t b : m.bytes) {
      out += kHex[b >> 4];
      out += kHex[b & 0xF];
    }
    out += "\n";
  }
  return out;
}

}  // namespace healthmap
