#pragma once

// `hm` command-line front end. Each subcommand is a thin wrapper over one
// library operation. Exit codes: 0 success, 1 validation/domain error,
// 2 usage error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "healthmap/healthmap.hpp"

namespace healthmap::cli {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_binary(const fs::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

inline std::string read_text(const fs::path& path) {
  auto raw = read_binary(path);
  return {raw.begin(), raw.end()};
}

inline void write_text(const fs::path& path, std::string_view text) {
  write_binary(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Sidecar from --sym, else <image>.sym next to the image, else numeric names.
inline SymbolTable load_symbols(const std::string& sym_option, const fs::path& image, const HealthMap& map) {
  fs::path path = sym_option;
  if (path.empty()) {
    path = fs::path(image).replace_extension(".sym");
    if (!fs::exists(path)) {
      SymbolTable table;
      for (const auto& m : map.modules) table.add({m.id, std::to_string(m.id), std::nullopt});
      return table;
    }
  }
  return parse_sidecar(read_text(path));
}

inline ModuleId resolve_module(const std::string& ref, const SymbolTable& symbols) {
  if (const SymbolEntry* e = symbols.find(ref)) return e->id;
  if (auto id = detail::parse_u32(ref)) return *id;
  throw Error(ErrorCode::kMissingSymbol, "no module named '" + ref + "'");
}

inline ResourceMap resource_map_with_maintenance(const HealthMap& map, const SymbolTable& symbols,
                                                 const std::vector<std::string>& maintenance) {
  ResourceMap rm = init_resource_map(map);
  for (const auto& ref : maintenance) rm.set_maintenance(resolve_module(ref, symbols), true);
  return rm;
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

inline std::string dump_image(std::span<const std::uint8_t> image, const SymbolTable* symbols) {
  const DecodedImage d = decode(image);
  const auto& h = d.layout.header;
  std::ostringstream out;
  out << "header: version=" << h.version << " flags=" << h.flags << " totalLength=" << h.total_length
      << " modules=" << h.counts.modules << " diagResources=" << h.counts.diag_resources
      << " dependencies=" << h.counts.dependencies << " faults=" << h.counts.faults
      << " detections=" << h.counts.detections << " bodyCrc=" << hex32(h.body_crc)
      << " headerCrc=" << hex32(h.header_crc) << "\n";
  for (std::size_t i = 0; i < d.map.modules.size(); ++i) {
    const Module& m = d.map.modules[i];
    const SymbolEntry* sym = symbols ? symbols->find(m.id) : nullptr;
    out << "module @" << d.layout.module_offsets[i] << " id=" << m.id;
    if (sym) out << " name=" << sym->name;
    if (sym && sym->core_id) out << " core=" << *sym->core_id;
    out << " parent=" << (m.parent ? std::to_string(*m.parent) : "-") << " criticality=" << to_string(m.criticality)
        << "\n";
    for (const auto& r : m.diag_resources) {
      out << "  instrument @" << d.layout.diag_offsets.at(r.id) << " id=" << r.id << " kind=" << int{r.kind} << "\n";
    }
    for (const auto& dep : m.dependencies) {
      out << "  dependency -> " << dep.dependent << " severity=" << to_string(dep.severity) << "\n";
    }
    for (std::size_t j = 0; j < m.faults.size(); ++j) {
      const Fault& f = m.faults[j];
      out << "  fault @" << d.layout.fault_offsets[i][j] << " severity=" << to_string(f.severity)
          << " persistence=" << to_string(f.persistence) << " class=" << int{f.classification} << "\n";
      for (std::size_t k = 0; k < f.detections.size(); ++k) {
        const FaultDetection& det = f.detections[k];
        out << "    detection @" << d.layout.detection_offsets[i][j][k] << " detector=" << det.detector
            << " t=" << det.timestamp << " counter=" << det.counter << " payload=" << hex32(det.payload)
            << (det.merged() ? " MERGED" : "") << "\n";
      }
    }
  }
  return out.str();
}

inline Severity severity_option(const std::string& text) {
  auto s = parse_severity(text);
  if (!s) throw CLI::ValidationError("--sev", "expected ZERO, LOW, MEDIUM or HIGH");
  return *s;
}

/// Runs one `hm` invocation; `argv[0]` is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Health Map toolkit: compile, inspect and update SoC health data", "hm"};
  app.require_subcommand(1);

  std::string xml_path, shm_path, sym_path, tasks_path, scenario_path, out_dir, sev_text, payload_text, shm_out;
  std::uint32_t detector = 0, classification = 0, cores = 0;
  std::uint64_t timestamp = 0;
  std::vector<std::string> maintenance;
  ClassifierConfig classifier;

  auto* compile_cmd = app.add_subcommand("compile", "Compile an XML description into an SHM image");
  compile_cmd->add_option("xml", xml_path, "Health Map description")->required();
  compile_cmd->add_option("-o,--output", shm_path, "SHM image to write")->required();
  compile_cmd->add_option("--sym", sym_path, "Name sidecar to write");

  auto* validate_cmd = app.add_subcommand("validate", "Check an SHM image");
  validate_cmd->add_option("shm", shm_path)->required();

  auto* dump_cmd = app.add_subcommand("dump", "Print every record of an SHM image");
  dump_cmd->add_option("shm", shm_path)->required();
  dump_cmd->add_option("--sym", sym_path);

  auto* inject_cmd = app.add_subcommand("inject", "Report one detection and append it to the image");
  inject_cmd->add_option("shm", shm_path)->required();
  inject_cmd->add_option("--detector", detector)->required();
  inject_cmd->add_option("--sev", sev_text)->required();
  inject_cmd->add_option("--class", classification)->required()->check(CLI::Range(0, 255));
  inject_cmd->add_option("--t", timestamp, "Timestamp in microseconds")->required();
  inject_cmd->add_option("--payload", payload_text, "Raw sensor word (hex)");
  inject_cmd->add_option("--merge-window", classifier.merge_window_us, "Merge window in microseconds");
  inject_cmd->add_option("--intermittent-after", classifier.intermittent_threshold);
  inject_cmd->add_option("--permanent-after", classifier.permanent_threshold);

  auto* rm_cmd = app.add_subcommand("rm", "Print the Resource Map table");
  rm_cmd->add_option("shm", shm_path)->required();
  rm_cmd->add_option("--sym", sym_path);
  rm_cmd->add_option("--maintenance", maintenance, "Module (name or id) under maintenance; repeatable");

  auto* affinity_cmd = app.add_subcommand("affinity", "Compute core affinity masks for a task set");
  affinity_cmd->add_option("shm", shm_path)->required();
  affinity_cmd->add_option("--tasks", tasks_path)->required();
  affinity_cmd->add_option("--sym", sym_path);
  affinity_cmd->add_option("--maintenance", maintenance, "Module (name or id) under maintenance; repeatable");

  auto* prune_cmd = app.add_subcommand("prune", "Merge duplicate faults and detections (rewrites the image)");
  prune_cmd->add_option("shm", shm_path)->required();

  auto* estimate_cmd = app.add_subcommand("estimate", "Memory footprint for a core count");
  estimate_cmd->add_option("--cores", cores)->required();
  estimate_cmd->add_option("--shm", shm_out, "Also write a synthesized image with the estimated counts");
  estimate_cmd->add_option("--sym", sym_path, "Sidecar for the synthesized image");

  auto* simulate_cmd = app.add_subcommand("simulate", "Run a hierarchical scenario");
  simulate_cmd->add_option("scenario", scenario_path)->required();
  simulate_cmd->add_option("--out", out_dir, "Directory for timeline.txt and messages.log");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "hm: " << e.what() << "\n" << "Run 'hm --help' for usage.\n";
    return 2;
  }

  try {
    if (compile_cmd->parsed()) {
      CompiledHealthMap compiled = compile(read_text(xml_path));
      write_binary(shm_path, compiled.image);
      if (!sym_path.empty()) write_text(sym_path, format_sidecar(compiled.symbols));
      out << "compiled " << compiled.map.module_count() << " modules, " << compiled.image.size() << " bytes\n";
    } else if (validate_cmd->parsed()) {
      const ShmHeader h = validate_image(read_binary(shm_path));
      out << "valid: totalLength=" << h.total_length << " M=" << h.counts.modules << " R=" << h.counts.diag_resources
          << " D=" << h.counts.dependencies << " F=" << h.counts.faults << " FD=" << h.counts.detections << "\n";
    } else if (dump_cmd->parsed()) {
      const auto image = read_binary(shm_path);
      const HealthMap map = deserialize(image);
      const SymbolTable symbols = load_symbols(sym_path, shm_path, map);
      out << dump_image(image, &symbols);
    } else if (inject_cmd->parsed()) {
      classifier.validate();
      DetectionReport report;
      report.detector = detector;
      report.severity = severity_option(sev_text);
      report.classification = static_cast<std::uint8_t>(classification);
      report.timestamp = timestamp;
      if (!payload_text.empty()) {
        report.payload = parse_report_line("detect 0 sev=LOW class=0 t=0 payload=" + payload_text).payload;
      }
      const auto image = read_binary(shm_path);
      const HealthMap before = deserialize(image);
      HealthMap after = before;
      const ReportOutcome outcome = report_detection(after, report, classifier);
      const ShmImage updated = append_fault_data(image, diff_fault_data(before, after));
      write_binary(shm_path, updated);
      const Fault& f = after.fault(outcome.fault);
      out << (outcome.created ? "new fault" : outcome.counter_merged ? "merged into detection" : "new detection")
          << " on module " << outcome.fault.module << ": severity=" << to_string(f.severity)
          << " persistence=" << to_string(f.persistence) << " events=" << f.event_count() << "; image "
          << image.size() << " -> " << updated.size() << " bytes\n";
    } else if (rm_cmd->parsed()) {
      const HealthMap map = deserialize(read_binary(shm_path));
      const SymbolTable symbols = load_symbols(sym_path, shm_path, map);
      out << render_table(resource_map_with_maintenance(map, symbols, maintenance), symbols);
    } else if (affinity_cmd->parsed()) {
      const HealthMap map = deserialize(read_binary(shm_path));
      const SymbolTable symbols = load_symbols(sym_path, shm_path, map);
      const auto tasks = parse_task_set(read_text(tasks_path));
      const ResourceMap rm = resource_map_with_maintenance(map, symbols, maintenance);
      const auto masks = compute_affinity(rm, symbols, tasks);
      out << format_masks(masks);
    } else if (prune_cmd->parsed()) {
      HealthMap map = deserialize(read_binary(shm_path));
      const std::size_t merged = prune(map);
      const ShmImage image = serialize(map);
      write_binary(shm_path, image);
      out << "merged " << merged << " records; image now " << image.size() << " bytes\n";
    } else if (estimate_cmd->parsed()) {
      out << render_estimate(estimate(cores));
      if (!shm_out.empty()) {
        const SynthesizedSystem sys = synthesize_system(cores);
        write_binary(shm_out, serialize(sys.map));
        if (!sym_path.empty()) write_text(sym_path, format_sidecar(sys.symbols));
      }
    } else if (simulate_cmd->parsed()) {
      const SimulationResult result = simulate(load_scenario(scenario_path));
      const std::string timeline = render_timeline(result);
      const std::string messages = render_message_log(result);
      if (out_dir.empty()) {
        out << timeline << messages;
      } else {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "timeline.txt", timeline);
        write_text(fs::path(out_dir) / "messages.log", messages);
        out << result.timeline.size() << " timeline records, " << result.messages.size() << " messages\n";
      }
    }
  } catch (const CLI::ValidationError& e) {
    err << "hm: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "hm: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "hm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace healthmap::cli
