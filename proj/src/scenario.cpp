#include "sectx/scenario.hpp"

#include <fstream>

namespace sectx::scenario {

using nlohmann::json;

namespace {

const json& require(const json& j, const std::string& key,
                    const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw SchemaError(path, "missing required key '" + key + "'");
  }
  return *it;
}

lattice::PrincipalSet principal_set(const json& j, const std::string& path,
                                    const lattice::PrincipalSet* universe) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of principals");
  lattice::PrincipalSet out;
  for (const auto& p : j) {
    if (!p.is_string()) throw SchemaError(path, "principal must be a string");
    std::string name = p.get<std::string>();
    if (universe && !universe->count(name)) {
      throw SchemaError(path, "undeclared principal '" + name + "'");
    }
    out.insert(std::move(name));
  }
  return out;
}

Label label_object(const json& j, const std::string& path,
                   const lattice::PrincipalSet& universe) {
  if (!j.is_object()) {
    throw SchemaError(path, "expected {\"readers\":[...],\"writers\":[...]}");
  }
  try {
    return Label(principal_set(require(j, "readers", path), path + ".readers",
                               &universe),
                 principal_set(require(j, "writers", path), path + ".writers",
                               &universe));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path, e.what());
  }
}

// A label position accepts an inline object, the name of a declared label,
// or "$var" referencing a label variable.
Label label_value(const json& j, const std::string& path, const Scenario& s,
                  std::optional<std::string>* var_out = nullptr) {
  if (j.is_string()) {
    std::string name = j.get<std::string>();
    if (!name.empty() && name[0] == '$') {
      std::string var = name.substr(1);
      auto it = s.label_vars.find(var);
      if (it == s.label_vars.end()) {
        throw SchemaError(path, "unbound label variable '" + name + "'");
      }
      if (var_out) *var_out = var;
      return it->second;
    }
    auto it = s.labels.find(name);
    if (it == s.labels.end()) {
      throw SchemaError(path, "unknown label name '" + name + "'");
    }
    return it->second;
  }
  return label_object(j, path, s.principals);
}

json label_to_json(const Label& l) {
  return json{{"readers", l.readers()}, {"writers", l.writers()}};
}

model::EventKind kind_from_string(const std::string& s,
                                  const std::string& path) {
  using model::EventKind;
  static const std::map<std::string, EventKind> kinds = {
      {"start", EventKind::Start},
      {"read", EventKind::Read},
      {"write", EventKind::Write},
      {"send", EventKind::Send},
      {"receive", EventKind::Receive},
      {"delay", EventKind::NetworkDelay},
      {"lock_acquire", EventKind::LockAcquire},
      {"lock_release", EventKind::LockRelease},
      {"precommit", EventKind::Precommit},
      {"commit", EventKind::Commit},
      {"abort", EventKind::Abort},
      {"local", EventKind::Local},
  };
  auto it = kinds.find(s);
  if (it == kinds.end()) throw SchemaError(path, "unknown event kind '" + s + "'");
  return it->second;
}

std::string kind_to_string(model::EventKind k) {
  using model::EventKind;
  switch (k) {
    case EventKind::Start: return "start";
    case EventKind::Read: return "read";
    case EventKind::Write: return "write";
    case EventKind::Send: return "send";
    case EventKind::Receive: return "receive";
    case EventKind::NetworkDelay: return "delay";
    case EventKind::LockAcquire: return "lock_acquire";
    case EventKind::LockRelease: return "lock_release";
    case EventKind::Precommit: return "precommit";
    case EventKind::Commit: return "commit";
    case EventKind::Abort: return "abort";
    case EventKind::Local: return "local";
  }
  return "local";
}

void validate(const Scenario& s) {
  for (const auto& f : s.fields) {
    const auto* loc = s.find_location(f.location);
    if (!loc) {
      throw SchemaError("fields." + f.id,
                        "undeclared location '" + f.location + "'");
    }
    if (!lattice::flows_to(f.label, loc->label)) {
      throw SchemaError("fields." + f.id,
                        "field label " + f.label.str() +
                            " cannot be hosted at location labeled " +
                            loc->label.str());
    }
  }
  for (const auto& p : s.programs) {
    if (!s.find_location(p.location)) {
      throw SchemaError("programs." + p.name,
                        "undeclared location '" + p.location + "'");
    }
    if (!s.principals.count(p.principal)) {
      throw SchemaError("programs." + p.name,
                        "undeclared principal '" + p.principal + "'");
    }
    try {
      txdsl::Program ast = parse(p);
      txdsl::Context ctx = make_context(s);
      txdsl::annotate_pc(ast, ctx);  // rejects undeclared fields
    } catch (const txdsl::ParseError& e) {
      throw SchemaError("programs." + p.name, e.what());
    }
  }
  for (const auto& st : s.starts) {
    if (!s.find_program(st.program)) {
      throw SchemaError("starts", "unknown program '" + st.program + "'");
    }
  }
  for (const auto& [vname, overrides] : s.variants) {
    for (const auto& [field, value] : overrides) {
      if (!s.find_field(field)) {
        throw SchemaError("variants." + vname,
                          "unknown field '" + field + "'");
      }
    }
  }
  if (!s.default_protocol.empty() && s.default_protocol != "2pc" &&
      s.default_protocol != "locks" && s.default_protocol != "sc") {
    throw SchemaError("default_protocol",
                      "expected one of 2pc, locks, sc");
  }
  for (const auto& rt : s.raw_transactions) {
    std::set<std::string> keys;
    for (const auto& e : rt.events) {
      if (!keys.insert(e.key).second) {
        throw SchemaError("raw_transactions." + rt.id,
                          "duplicate event key '" + e.key + "'");
      }
      if (!s.find_location(e.location)) {
        throw SchemaError("raw_transactions." + rt.id,
                          "undeclared location '" + e.location + "'");
      }
    }
    for (const auto& [a, b] : rt.edges) {
      if (!keys.count(a) || !keys.count(b)) {
        throw SchemaError("raw_transactions." + rt.id,
                          "edge references unknown event key");
      }
    }
  }
  for (const auto& [a, b] : s.wall) {
    if (!s.find_location(a) || !s.find_location(b)) {
      throw SchemaError("wall", "undeclared location in wall pair");
    }
  }
}

}  // namespace

const ProgramDef* Scenario::find_program(const std::string& name) const {
  for (const auto& p : programs) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const FieldDef* Scenario::find_field(const FieldId& id) const {
  for (const auto& f : fields) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

const model::Location* Scenario::find_location(const LocationId& id) const {
  for (const auto& l : locations) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path, "cannot open scenario file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError(path, e.what());
  }
  return parse_scenario(j);
}

Scenario parse_scenario(const json& j) {
  if (!j.is_object()) throw SchemaError("$", "scenario must be an object");
  if (require(j, "schema", "$") != 1) {
    throw SchemaError("schema", "unsupported schema version");
  }
  Scenario s;
  s.name = require(j, "name", "$").get<std::string>();
  s.principals = principal_set(require(j, "principals", "$"), "principals",
                               nullptr);
  if (j.contains("labels")) {
    for (const auto& [name, lj] : j.at("labels").items()) {
      s.labels.emplace(name, label_object(lj, "labels." + name, s.principals));
    }
  }
  if (j.contains("label_vars")) {
    for (const auto& [name, lj] : j.at("label_vars").items()) {
      s.label_vars.emplace(name,
                           label_value(lj, "label_vars." + name, s));
    }
  }
  for (const auto& lj : require(j, "locations", "$")) {
    model::Location loc;
    loc.id = require(lj, "id", "locations").get<std::string>();
    loc.label = label_value(require(lj, "label", "locations"),
                            "locations." + loc.id, s);
    if (lj.contains("principals")) {
      loc.principals = principal_set(lj.at("principals"),
                                     "locations." + loc.id, &s.principals);
    }
    s.locations.push_back(std::move(loc));
  }
  if (j.contains("fields")) {
    for (const auto& fj : j.at("fields")) {
      FieldDef f;
      f.id = require(fj, "id", "fields").get<std::string>();
      f.location = require(fj, "location", "fields").get<std::string>();
      f.label = label_value(require(fj, "label", "fields"), "fields." + f.id,
                            s, &f.label_var);
      f.init = fj.value("init", "");
      s.fields.push_back(std::move(f));
    }
  }
  if (j.contains("programs")) {
    for (const auto& pj : j.at("programs")) {
      ProgramDef p;
      p.name = require(pj, "name", "programs").get<std::string>();
      p.principal = require(pj, "principal", "programs").get<std::string>();
      p.location = require(pj, "location", "programs").get<std::string>();
      p.source = require(pj, "source", "programs").get<std::string>();
      s.programs.push_back(std::move(p));
    }
  }
  if (j.contains("starts")) {
    for (const auto& sj : j.at("starts")) {
      s.starts.push_back({require(sj, "program", "starts").get<std::string>(),
                          sj.value("time", int64_t{0})});
    }
  }
  if (j.contains("variants")) {
    for (const auto& [vname, vj] : j.at("variants").items()) {
      std::map<FieldId, std::string> overrides;
      for (const auto& [field, value] : vj.items()) {
        overrides[field] = value.get<std::string>();
      }
      s.variants.emplace(vname, std::move(overrides));
    }
  }
  s.default_protocol = j.value("default_protocol", "");
  if (j.contains("raw_transactions")) {
    for (const auto& tj : j.at("raw_transactions")) {
      RawTransaction rt;
      rt.id = require(tj, "id", "raw_transactions").get<std::string>();
      for (const auto& ej : require(tj, "events", "raw_transactions")) {
        RawEvent e;
        e.key = require(ej, "key", "raw_transactions").get<std::string>();
        e.location =
            require(ej, "location", "raw_transactions").get<std::string>();
        e.label = label_value(require(ej, "label", "raw_transactions"),
                              "raw_transactions." + rt.id, s);
        e.kind = kind_from_string(ej.value("kind", "local"),
                                  "raw_transactions." + rt.id);
        if (ej.contains("field")) {
          e.field = ej.at("field").get<std::string>();
        }
        rt.events.push_back(std::move(e));
      }
      if (tj.contains("edges")) {
        for (const auto& edge : tj.at("edges")) {
          rt.edges.emplace_back(edge.at(0).get<std::string>(),
                                edge.at(1).get<std::string>());
        }
      }
      s.raw_transactions.push_back(std::move(rt));
    }
  }
  if (j.contains("wall")) {
    for (const auto& pair : j.at("wall")) {
      s.wall.emplace_back(pair.at(0).get<std::string>(),
                          pair.at(1).get<std::string>());
    }
  }
  validate(s);
  return s;
}

json to_json(const Scenario& s) {
  json j;
  j["schema"] = 1;
  j["name"] = s.name;
  j["principals"] = s.principals;
  if (!s.labels.empty()) {
    json labels = json::object();
    for (const auto& [name, l] : s.labels) labels[name] = label_to_json(l);
    j["labels"] = labels;
  }
  if (!s.label_vars.empty()) {
    json vars = json::object();
    for (const auto& [name, l] : s.label_vars) vars[name] = label_to_json(l);
    j["label_vars"] = vars;
  }
  j["locations"] = json::array();
  for (const auto& loc : s.locations) {
    j["locations"].push_back({{"id", loc.id},
                              {"label", label_to_json(loc.label)},
                              {"principals", loc.principals}});
  }
  if (!s.fields.empty()) {
    j["fields"] = json::array();
    for (const auto& f : s.fields) {
      json fj = {{"id", f.id}, {"location", f.location}, {"init", f.init}};
      if (f.label_var) {
        fj["label"] = "$" + *f.label_var;
      } else {
        fj["label"] = label_to_json(f.label);
      }
      j["fields"].push_back(std::move(fj));
    }
  }
  if (!s.programs.empty()) {
    j["programs"] = json::array();
    for (const auto& p : s.programs) {
      j["programs"].push_back({{"name", p.name},
                               {"principal", p.principal},
                               {"location", p.location},
                               {"source", p.source}});
    }
  }
  if (!s.starts.empty()) {
    j["starts"] = json::array();
    for (const auto& st : s.starts) {
      j["starts"].push_back({{"program", st.program}, {"time", st.time}});
    }
  }
  if (!s.variants.empty()) {
    json vj = json::object();
    for (const auto& [name, overrides] : s.variants) {
      vj[name] = overrides;
    }
    j["variants"] = vj;
  }
  if (!s.default_protocol.empty()) j["default_protocol"] = s.default_protocol;
  if (!s.raw_transactions.empty()) {
    j["raw_transactions"] = json::array();
    for (const auto& rt : s.raw_transactions) {
      json tj = {{"id", rt.id}, {"events", json::array()}};
      for (const auto& e : rt.events) {
        json ej = {{"key", e.key},
                   {"location", e.location},
                   {"label", label_to_json(e.label)},
                   {"kind", kind_to_string(e.kind)}};
        if (e.field) ej["field"] = *e.field;
        tj["events"].push_back(std::move(ej));
      }
      tj["edges"] = json::array();
      for (const auto& [a, b] : rt.edges) {
        tj["edges"].push_back({a, b});
      }
      j["raw_transactions"].push_back(std::move(tj));
    }
  }
  if (!s.wall.empty()) {
    j["wall"] = json::array();
    for (const auto& [a, b] : s.wall) j["wall"].push_back({a, b});
  }
  return j;
}

txdsl::Context make_context(const Scenario& s) {
  txdsl::Context ctx;
  ctx.universe = s.principals;
  for (const auto& f : s.fields) {
    ctx.fields[f.id] = txdsl::FieldInfo{f.id, f.location, f.label, f.label_var};
  }
  for (const auto& l : s.locations) {
    ctx.locations[l.id] = txdsl::LocationInfo{l.id, l.label};
  }
  return ctx;
}

txdsl::Program parse(const ProgramDef& p) {
  txdsl::Program ast = txdsl::parse_program(p.source);
  ast.name = p.name;
  ast.principal = p.principal;
  ast.location = p.location;
  return ast;
}

Scenario apply_variant(const Scenario& s, const std::string& variant) {
  auto it = s.variants.find(variant);
  if (it == s.variants.end()) {
    throw SchemaError("variants", "unknown variant '" + variant + "'");
  }
  Scenario out = s;
  for (auto& f : out.fields) {
    auto ov = it->second.find(f.id);
    if (ov != it->second.end()) f.init = ov->second;
  }
  return out;
}

}  // namespace sectx::scenario
