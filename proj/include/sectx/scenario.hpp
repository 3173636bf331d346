#ifndef SECTX_SCENARIO_HPP_
#define SECTX_SCENARIO_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sectx/lattice.hpp"
#include "sectx/model.hpp"
#include "sectx/txdsl.hpp"

namespace sectx::scenario {

using lattice::Label;
using model::FieldId;
using model::LocationId;

struct SchemaError : std::runtime_error {
  SchemaError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path(std::move(path)) {}
  std::string path;
};

struct FieldDef {
  FieldId id;  // qualified "location.name"
  LocationId location;
  Label label;
  std::optional<std::string> label_var;  // bound through label_vars
  std::string init;

  bool operator==(const FieldDef&) const = default;
};

struct ProgramDef {
  std::string name;
  lattice::Principal principal;
  LocationId location;
  std::string source;

  bool operator==(const ProgramDef&) const = default;
};

struct StartDef {
  std::string program;
  int64_t time = 0;

  bool operator==(const StartDef&) const = default;
};

/// Hand-built transaction shape for scenarios that bypass the language
/// (used by the communication-wall counterexample).
struct RawEvent {
  std::string key;
  LocationId location;
  Label label;
  model::EventKind kind = model::EventKind::Local;
  std::optional<FieldId> field;

  bool operator==(const RawEvent&) const = default;
};

struct RawTransaction {
  std::string id;
  std::vector<RawEvent> events;
  std::vector<std::pair<std::string, std::string>> edges;  // by event key

  bool operator==(const RawTransaction&) const = default;
};

struct Scenario {
  std::string name;
  lattice::PrincipalSet principals;
  std::map<std::string, Label> labels;      // named labels, by convention
  std::map<std::string, Label> label_vars;  // bindings for "$var" field labels
  std::vector<model::Location> locations;
  std::vector<FieldDef> fields;
  std::vector<ProgramDef> programs;
  std::vector<StartDef> starts;
  std::map<std::string, std::map<FieldId, std::string>> variants;
  std::string default_protocol;  // "2pc", "locks" or "sc"
  std::vector<RawTransaction> raw_transactions;
  /// Pairs of locations that may not exchange messages.
  std::vector<std::pair<LocationId, LocationId>> wall;

  bool operator==(const Scenario&) const = default;

  const ProgramDef* find_program(const std::string& name) const;
  const FieldDef* find_field(const FieldId& id) const;
  const model::Location* find_location(const LocationId& id) const;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);

/// Checker-facing view of the scenario's fields and locations.
txdsl::Context make_context(const Scenario& s);

/// Parses a program definition, stamping name/principal/location.
txdsl::Program parse(const ProgramDef& p);

/// Copy of the scenario with field initial values overridden by the variant.
Scenario apply_variant(const Scenario& s, const std::string& variant);

}  // namespace sectx::scenario

#endif  // SECTX_SCENARIO_HPP_
