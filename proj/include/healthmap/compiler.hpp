#pragma once

// Off-line preparation: parse the XML Health Map description, expand
// templates, and compile it into an SHM image plus a name sidecar.
//
//   <healthmap version="1">
//     <module id="U32" name="NAME" criticality="ZERO|LOW|MEDIUM|HIGH" [coreId="U32"]>
//       <instrument id="U32" kind="U8"/>
//       <module .../>                                  nesting = parent
//     </module>
//     <dependency provider="U32" dependent="U32" severity="LOW|MEDIUM|HIGH"/>
//     <template name="NAME" count="N" baseId="U32" idStride="U32"> one module subtree </template>
//   </healthmap>
//
// Inside a template body, module and instrument ids are offsets: instance k
// uses baseId + k*idStride + offset. The instance root is named after the
// template (`{k}` replaced by k, or k appended); `{k}` in any other name is
// replaced too. A coreId in the body is a base: instance k gets coreId + k.
// Requires expat.

#include <expat.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "healthmap/error.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/shm_codec.hpp"
#include "healthmap/symbols.hpp"
#include "healthmap/types.hpp"

namespace healthmap {

struct SourceLocation {
  long line = 0;
  long column = 0;
  bool operator==(const SourceLocation&) const = default;
};

inline std::string to_string(const SourceLocation& loc) {
  return std::to_string(loc.line) + ":" + std::to_string(loc.column);
}

struct InstrumentDecl {
  std::uint32_t id = 0;
  std::uint8_t kind = 0;
  SourceLocation loc;
  bool operator==(const InstrumentDecl& o) const { return id == o.id && kind == o.kind; }
};

struct TemplateSpec {
  std::string name;
  std::uint32_t count = 1;
  std::uint32_t base_id = 0;
  std::uint32_t id_stride = 0;
  bool operator==(const TemplateSpec&) const = default;
};

// A <module>, or a <template> when `repeat` is set (its single child is the body).
struct ModuleDecl {
  std::optional<TemplateSpec> repeat;
  std::uint32_t id = 0;
  std::string name;
  Severity criticality = Severity::kZero;
  std::optional<std::uint32_t> core_id;
  std::vector<InstrumentDecl> instruments;
  std::vector<ModuleDecl> children;
  SourceLocation loc;

  // Locations are diagnostics only.
  bool operator==(const ModuleDecl& o) const {
    return repeat == o.repeat && id == o.id && name == o.name && criticality == o.criticality &&
           core_id == o.core_id && instruments == o.instruments && children == o.children;
  }
};

struct DependencyDecl {
  std::uint32_t provider = 0;
  std::uint32_t dependent = 0;
  Severity severity = Severity::kLow;
  SourceLocation loc;
  bool operator==(const DependencyDecl& o) const {
    return provider == o.provider && dependent == o.dependent && severity == o.severity;
  }
};

struct HmDescription {
  std::vector<ModuleDecl> roots;
  std::vector<DependencyDecl> dependencies;
  bool operator==(const HmDescription&) const = default;
};

namespace detail {

class DescriptionParser {
 public:
  HmDescription parse(std::string_view text) {
    std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr), &XML_ParserFree);
    if (!parser) throw Error(ErrorCode::kIoError, "cannot allocate XML parser");
    parser_ = parser.get();
    XML_SetUserData(parser_, this);
    XML_SetElementHandler(parser_, &DescriptionParser::on_start, &DescriptionParser::on_end);
    XML_SetCharacterDataHandler(parser_, &DescriptionParser::on_text);

    const auto status = XML_Parse(parser_, text.data(), static_cast<int>(text.size()), XML_TRUE);
    if (error_) throw *error_;
    if (status == XML_STATUS_ERROR) {
      throw Error(ErrorCode::kXmlSyntax, location_string() + ": " + XML_ErrorString(XML_GetErrorCode(parser_)));
    }
    if (!seen_root_) throw Error(ErrorCode::kSchemaViolation, "missing <healthmap> root element");
    return std::move(doc_);
  }

 private:
  enum class Kind { kHealthmap, kModule, kInstrument, kDependency, kTemplate };

  using Attributes = std::map<std::string, std::string>;

  SourceLocation here() const {
    return {static_cast<long>(XML_GetCurrentLineNumber(parser_)),
            static_cast<long>(XML_GetCurrentColumnNumber(parser_)) + 1};
  }
  std::string location_string() const { return to_string(here()); }

  void fail(ErrorCode code, const std::string& why) {
    if (!error_) error_ = Error(code, location_string() + ": " + why);
    XML_StopParser(parser_, XML_FALSE);
  }

  static void on_start(void* self, const XML_Char* name, const XML_Char** attrs) {
    auto* p = static_cast<DescriptionParser*>(self);
    if (p->error_) return;
    try {
      Attributes a;
      for (int i = 0; attrs[i] != nullptr; i += 2) a[attrs[i]] = attrs[i + 1];
      p->start(name, a);
    } catch (const Error& e) {
      p->fail(e.code(), e.detail());
    }
  }
  static void on_end(void* self, const XML_Char*) {
    auto* p = static_cast<DescriptionParser*>(self);
    if (p->error_) return;
    p->end();
  }
  static void on_text(void* self, const XML_Char* s, int len) {
    auto* p = static_cast<DescriptionParser*>(self);
    if (p->error_) return;
    for (int i = 0; i < len; ++i) {
      if (s[i] != ' ' && s[i] != '\t' && s[i] != '\n' && s[i] != '\r') {
        p->fail(ErrorCode::kSchemaViolation, "unexpected text content");
        return;
      }
    }
  }

  static void allow_only(const Attributes& a, std::initializer_list<std::string_view> names, std::string_view element) {
    for (const auto& [key, value] : a) {
      if (std::find(names.begin(), names.end(), key) == names.end()) {
        throw Error(ErrorCode::kSchemaViolation, "attribute '" + key + "' is not allowed on <" + std::string(element) + ">");
      }
    }
  }
  static const std::string& required(const Attributes& a, const std::string& key, std::string_view element) {
    auto it = a.find(key);
    if (it == a.end()) {
      throw Error(ErrorCode::kSchemaViolation, "<" + std::string(element) + "> requires attribute '" + key + "'");
    }
    return it->second;
  }
  static std::uint32_t number(const std::string& text, const std::string& key) {
    auto v = parse_u32(text);
    if (!v) throw Error(ErrorCode::kSchemaViolation, "attribute '" + key + "' must be an unsigned 32-bit integer");
    return *v;
  }
  static Severity level(const std::string& text, const std::string& key, bool allow_zero) {
    auto s = parse_severity(text);
    if (!s || (!allow_zero && *s == Severity::kZero)) {
      throw Error(ErrorCode::kBadEnumValue, "attribute '" + key + "' has invalid value '" + text + "'");
    }
    return *s;
  }
  static void check_name(const std::string& name) {
    if (name.empty() || name.find_first_of(" \t\r\n.") != std::string::npos) {
      throw Error(ErrorCode::kSchemaViolation, "module name '" + name + "' must be non-empty without dots or spaces");
    }
  }

  // Children container of the innermost open module/template.
  std::vector<ModuleDecl>& child_slot() { return open_.empty() ? doc_.roots : open_.back()->children; }

  void start(const std::string& element, const Attributes& a) {
    const std::optional<Kind> parent = kinds_.empty() ? std::nullopt : std::optional<Kind>(kinds_.back());
    if (!parent) {
      if (element != "healthmap") throw Error(ErrorCode::kSchemaViolation, "root element must be <healthmap>");
      allow_only(a, {"version"}, element);
      if (required(a, "version", element) != "1") throw Error(ErrorCode::kSchemaViolation, "unsupported version");
      seen_root_ = true;
      kinds_.push_back(Kind::kHealthmap);
      return;
    }
    const bool in_template_body = std::any_of(open_.begin(), open_.end(), [](const ModuleDecl* m) { return m->repeat.has_value(); });

    if (element == "module") {
      if (*parent != Kind::kHealthmap && *parent != Kind::kModule && *parent != Kind::kTemplate) {
        throw Error(ErrorCode::kSchemaViolation, "<module> cannot appear here");
      }
      allow_only(a, {"id", "name", "criticality", "coreId"}, element);
      ModuleDecl m;
      m.loc = here();
      m.id = number(required(a, "id", element), "id");
      const bool template_root = *parent == Kind::kTemplate;
      if (template_root) {
        if (!open_.back()->children.empty()) {
          throw Error(ErrorCode::kSchemaViolation, "a <template> body holds exactly one root <module>");
        }
        if (auto it = a.find("name"); it != a.end()) m.name = it->second;
      } else {
        m.name = required(a, "name", element);
        check_name(m.name);
      }
      m.criticality = level(required(a, "criticality", element), "criticality", true);
      if (auto it = a.find("coreId"); it != a.end()) m.core_id = number(it->second, "coreId");
      child_slot().push_back(std::move(m));
      open_.push_back(&child_slot().back());
      kinds_.push_back(Kind::kModule);
    } else if (element == "instrument") {
      if (*parent != Kind::kModule) throw Error(ErrorCode::kSchemaViolation, "<instrument> must be inside a <module>");
      allow_only(a, {"id", "kind"}, element);
      InstrumentDecl inst;
      inst.loc = here();
      inst.id = number(required(a, "id", element), "id");
      const auto kind = number(required(a, "kind", element), "kind");
      if (kind > 255) throw Error(ErrorCode::kSchemaViolation, "instrument kind must fit in 8 bits");
      inst.kind = static_cast<std::uint8_t>(kind);
      open_.back()->instruments.push_back(inst);
      kinds_.push_back(Kind::kInstrument);
    } else if (element == "dependency") {
      if (*parent != Kind::kHealthmap) throw Error(ErrorCode::kSchemaViolation, "<dependency> must be a child of <healthmap>");
      allow_only(a, {"provider", "dependent", "severity"}, element);
      DependencyDecl d;
      d.loc = here();
      d.provider = number(required(a, "provider", element), "provider");
      d.dependent = number(required(a, "dependent", element), "dependent");
      d.severity = level(required(a, "severity", element), "severity", false);
      doc_.dependencies.push_back(d);
      kinds_.push_back(Kind::kDependency);
    } else if (element == "template") {
      if (*parent != Kind::kHealthmap && *parent != Kind::kModule) {
        throw Error(ErrorCode::kSchemaViolation, "<template> cannot appear here");
      }
      if (in_template_body) throw Error(ErrorCode::kSchemaViolation, "templates cannot be nested");
      allow_only(a, {"name", "count", "baseId", "idStride"}, element);
      ModuleDecl t;
      t.loc = here();
      TemplateSpec spec;
      spec.name = required(a, "name", element);
      if (spec.name.empty() || spec.name.find_first_of(" \t\r\n.") != std::string::npos) {
        throw Error(ErrorCode::kSchemaViolation, "template name must be non-empty without dots or spaces");
      }
      spec.count = number(required(a, "count", element), "count");
      if (spec.count == 0) throw Error(ErrorCode::kSchemaViolation, "template count must be at least 1");
      spec.base_id = number(required(a, "baseId", element), "baseId");
      spec.id_stride = number(required(a, "idStride", element), "idStride");
      t.repeat = std::move(spec);
      child_slot().push_back(std::move(t));
      open_.push_back(&child_slot().back());
      kinds_.push_back(Kind::kTemplate);
    } else {
      throw Error(ErrorCode::kSchemaViolation, "unknown element <" + element + ">");
    }
  }

  void end() {
    const Kind kind = kinds_.back();
    kinds_.pop_back();
    if (kind == Kind::kTemplate && open_.back()->children.empty()) {
      fail(ErrorCode::kSchemaViolation, "<template> needs one root <module>");
      return;
    }
    if (kind == Kind::kModule || kind == Kind::kTemplate) open_.pop_back();
  }

  XML_Parser parser_ = nullptr;
  HmDescription doc_;
  std::vector<Kind> kinds_;
  std::vector<ModuleDecl*> open_;  // stable: children vectors of open nodes only grow at their back
  std::optional<Error> error_;
  bool seen_root_ = false;
};

inline std::string substitute_index(std::string name, std::uint32_t k) {
  const std::string token = "{k}";
  for (auto pos = name.find(token); pos != std::string::npos; pos = name.find(token, pos)) {
    name.replace(pos, token.size(), std::to_string(k));
  }
  return name;
}

inline std::uint32_t instance_id(const TemplateSpec& t, std::uint32_t k, std::uint32_t offset, const SourceLocation& loc) {
  const std::uint64_t id = std::uint64_t{t.base_id} + std::uint64_t{k} * t.id_stride + offset;
  if (id > 0xFFFFFFFFull) {
    throw Error(ErrorCode::kIdRangeCollision, to_string(loc) + ": template '" + t.name + "' instance " +
                                                  std::to_string(k) + " overflows the 32-bit id space");
  }
  return static_cast<std::uint32_t>(id);
}

inline ModuleDecl instantiate(const ModuleDecl& body, const TemplateSpec& t, std::uint32_t k) {
  ModuleDecl out = body;
  out.id = instance_id(t, k, body.id, body.loc);
  out.name = substitute_index(body.name, k);
  if (body.core_id) {
    const std::uint64_t core = std::uint64_t{*body.core_id} + k;
    if (core > 0xFFFFFFFFull) {
      throw Error(ErrorCode::kIdRangeCollision, to_string(body.loc) + ": coreId of template '" + t.name +
                                                    "' instance " + std::to_string(k) + " overflows");
    }
    out.core_id = static_cast<std::uint32_t>(core);
  }
  for (auto& inst : out.instruments) inst.id = instance_id(t, k, inst.id, inst.loc);
  out.children.clear();
  for (const auto& child : body.children) out.children.push_back(instantiate(child, t, k));
  return out;
}

struct IdSpan {
  std::uint32_t lo = 0, hi = 0;
  bool any = false;
  void add(std::uint32_t id) {
    lo = any ? std::min(lo, id) : id;
    hi = any ? std::max(hi, id) : id;
    any = true;
  }
  bool overlaps(const IdSpan& o) const { return any && o.any && lo <= o.hi && o.lo <= hi; }
};

struct TemplateFootprint {
  std::string name;
  SourceLocation loc;
  IdSpan modules, instruments;
};

inline void collect_spans(const ModuleDecl& m, TemplateFootprint& fp) {
  fp.modules.add(m.id);
  for (const auto& i : m.instruments) fp.instruments.add(i.id);
  for (const auto& c : m.children) collect_spans(c, fp);
}

inline void collect_ids(const ModuleDecl& m, std::set<std::uint32_t>& modules, std::set<std::uint32_t>& instruments,
                        const TemplateFootprint& fp) {
  auto clash = [&](const char* what, std::uint32_t id) {
    return Error(ErrorCode::kIdRangeCollision, to_string(fp.loc) + ": instances of template '" + fp.name +
                                                   "' reuse " + what + " id " + std::to_string(id));
  };
  if (!modules.insert(m.id).second) throw clash("module", m.id);
  for (const auto& i : m.instruments) {
    if (!instruments.insert(i.id).second) throw clash("instrument", i.id);
  }
  for (const auto& c : m.children) collect_ids(c, modules, instruments, fp);
}

inline std::vector<ModuleDecl> expand_children(const std::vector<ModuleDecl>& nodes, std::vector<TemplateFootprint>& seen) {
  std::vector<ModuleDecl> out;
  for (const auto& node : nodes) {
    if (!node.repeat) {
      ModuleDecl m = node;
      m.children = expand_children(node.children, seen);
      out.push_back(std::move(m));
      continue;
    }
    const TemplateSpec& t = *node.repeat;
    TemplateFootprint fp{t.name, node.loc, {}, {}};
    std::set<std::uint32_t> module_ids, instrument_ids;
    const bool has_placeholder = t.name.find("{k}") != std::string::npos;
    for (std::uint32_t k = 0; k < t.count; ++k) {
      ModuleDecl inst = instantiate(node.children.front(), t, k);
      inst.name = has_placeholder ? substitute_index(t.name, k) : t.name + std::to_string(k);
      collect_spans(inst, fp);
      collect_ids(inst, module_ids, instrument_ids, fp);
      out.push_back(std::move(inst));
    }
    for (const auto& other : seen) {
      if (fp.modules.overlaps(other.modules) || fp.instruments.overlaps(other.instruments)) {
        throw Error(ErrorCode::kIdRangeCollision, to_string(fp.loc) + ": id range of template '" + t.name +
                                                      "' overlaps template '" + other.name + "' at " +
                                                      to_string(other.loc));
      }
    }
    seen.push_back(std::move(fp));
  }
  return out;
}

struct DeclIndex {
  std::unordered_map<std::uint32_t, SourceLocation> modules;
  std::unordered_map<std::uint32_t, SourceLocation> instruments;
  std::unordered_map<std::string, SourceLocation> names;
  std::unordered_map<std::uint32_t, SourceLocation> cores;
};

inline void index_decl(const ModuleDecl& m, const std::string& prefix, DeclIndex& idx) {
  auto dup = [](const std::string& what, const SourceLocation& a, const SourceLocation& b) {
    return Error(ErrorCode::kDuplicateId, what + " declared at " + to_string(b) + " and again at " + to_string(a));
  };
  if (auto [it, fresh] = idx.modules.emplace(m.id, m.loc); !fresh) {
    throw dup("module id " + std::to_string(m.id), m.loc, it->second);
  }
  const std::string dotted = prefix.empty() ? m.name : prefix + "." + m.name;
  if (auto [it, fresh] = idx.names.emplace(dotted, m.loc); !fresh) throw dup("module name " + dotted, m.loc, it->second);
  if (m.core_id) {
    if (auto [it, fresh] = idx.cores.emplace(*m.core_id, m.loc); !fresh) {
      throw Error(ErrorCode::kSchemaViolation, to_string(m.loc) + ": coreId " + std::to_string(*m.core_id) +
                                                   " already used at " + to_string(it->second));
    }
  }
  for (const auto& i : m.instruments) {
    if (auto [it, fresh] = idx.instruments.emplace(i.id, i.loc); !fresh) {
      throw dup("instrument id " + std::to_string(i.id), i.loc, it->second);
    }
  }
  for (const auto& c : m.children) index_decl(c, dotted, idx);
}

inline void check_expanded(const HmDescription& flat) {
  DeclIndex idx;
  for (const auto& r : flat.roots) index_decl(r, "", idx);
  for (const auto& d : flat.dependencies) {
    for (std::uint32_t end : {d.provider, d.dependent}) {
      if (!idx.modules.contains(end)) {
        throw Error(ErrorCode::kUnresolvedReference, to_string(d.loc) + ": dependency names unknown module " +
                                                         std::to_string(end));
      }
    }
    if (d.provider == d.dependent) {
      throw Error(ErrorCode::kSchemaViolation, to_string(d.loc) + ": module " + std::to_string(d.provider) +
                                                   " cannot depend on itself");
    }
  }
}

}  // namespace detail

/// Materializes every <template> into concrete module subtrees.
inline HmDescription expand_templates(const HmDescription& desc) {
  std::vector<detail::TemplateFootprint> seen;
  HmDescription out;
  out.roots = detail::expand_children(desc.roots, seen);
  out.dependencies = desc.dependencies;
  return out;
}

/// Parses and fully validates a description; the result keeps its templates.
inline HmDescription parse_description(std::string_view xml) {
  HmDescription desc = detail::DescriptionParser{}.parse(xml);
  detail::check_expanded(expand_templates(desc));
  return desc;
}

struct CompiledHealthMap {
  HealthMap map;
  ShmImage image;
  SymbolTable symbols;
};

namespace detail {
inline void build_module(const ModuleDecl& m, std::optional<ModuleId> parent, const std::string& prefix,
                         HealthMap& map, SymbolTable& symbols) {
  add_module(map, m.id, parent, m.criticality);
  const std::string dotted = prefix.empty() ? m.name : prefix + "." + m.name;
  symbols.add(SymbolEntry{m.id, dotted, m.core_id});
  for (const auto& i : m.instruments) add_diag_resource(map, m.id, i.id, i.kind);
  for (const auto& c : m.children) build_module(c, m.id, dotted, map, symbols);
}
}  // namespace detail

/// Builds the brand-new-hardware map (no faults) in document order and
/// serializes it.
inline CompiledHealthMap compile(const HmDescription& desc) {
  const HmDescription flat = expand_templates(desc);
  detail::check_expanded(flat);
  CompiledHealthMap out;
  for (const auto& r : flat.roots) detail::build_module(r, std::nullopt, "", out.map, out.symbols);
  for (const auto& d : flat.dependencies) add_dependency(out.map, d.provider, d.dependent, d.severity);
  out.image = serialize(out.map);
  return out;
}

inline CompiledHealthMap compile(std::string_view xml) { return compile(parse_description(xml)); }

}  // namespace healthmap
