#include "sectx.h"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <string>

#include <json.hpp>

#include "sectx/explore.hpp"
#include "sectx/netsim.hpp"
#include "sectx/scenario.hpp"
#include "sectx/sectest.hpp"
#include "sectx/txdsl.hpp"

using nlohmann::json;
using namespace sectx;

struct sectx_scenario {
  std::shared_ptr<const scenario::Scenario> scn;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

/// Runs an analysis, converting exceptions to status codes and the report
/// to an owned JSON string.
int guarded(char** out_json, const std::function<int(json&)>& body) {
  g_last_error.clear();
  if (out_json) *out_json = nullptr;
  try {
    json report;
    int status = body(report);
    if (out_json && !report.is_null()) *out_json = dup_string(report.dump(2));
    return status;
  } catch (const scenario::SchemaError& e) {
    g_last_error = e.what();
    return SECTX_USAGE;
  } catch (const explore::BoundExceeded& e) {
    g_last_error = e.what();
    return SECTX_USAGE;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return SECTX_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SECTX_INTERNAL;
  }
}

netsim::ProtocolKind pick_protocol(const scenario::Scenario& scn,
                                   const char* protocol) {
  std::string p = protocol ? protocol : "";
  if (p.empty()) p = scn.default_protocol.empty() ? "sc" : scn.default_protocol;
  return netsim::protocol_from_string(p);
}

json check_program(const scenario::ProgramDef& def, const txdsl::Context& ctx,
                   const std::map<std::string, lattice::Label>& label_vars) {
  json out{{"program", def.name},
           {"violations", json::array()},
           {"stages", json::array()}};
  auto add = [&](const std::string& kind, int line, const std::string& detail) {
    out["violations"].push_back(
        {{"kind", kind}, {"line", line}, {"detail", detail}});
  };
  try {
    txdsl::Program prog = scenario::parse(def);
    auto ann = txdsl::annotate_pc(prog, ctx);
    for (const auto& d : txdsl::check_pc_constraint(prog, ctx, ann)) {
      add(d.kind, d.line, d.detail);
    }
    txdsl::StagePlan plan = txdsl::plan_stages(prog, ctx, ann);
    plan = txdsl::resolve_dynamic_stagepoints(plan, label_vars);
    for (const auto& stage : plan.stages) {
      json accesses = json::array();
      for (const auto& a : stage.accesses) {
        accesses.push_back({{"line", a.line},
                            {"kind", a.kind == txdsl::Stmt::Kind::Read
                                         ? "read"
                                         : a.kind == txdsl::Stmt::Kind::Write
                                               ? "write"
                                               : "print"},
                            {"field", a.field}});
      }
      out["stages"].push_back({{"cl", stage.cl.str()},
                               {"coordinator", stage.coordinator},
                               {"accesses", accesses}});
    }
  } catch (const txdsl::ParseError& e) {
    add("parse", e.line, e.what());
  } catch (const txdsl::StageOrderViolation& e) {
    add("stage_order", e.line, e.left_cl + " vs " + e.right_cl);
  }
  return out;
}

}  // namespace

extern "C" {

sectx_scenario* sectx_scenario_open(const char* path) {
  g_last_error.clear();
  try {
    auto scn = std::make_shared<const scenario::Scenario>(
        scenario::load_scenario(path ? path : ""));
    return new sectx_scenario{std::move(scn)};
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  }
}

void sectx_scenario_close(sectx_scenario* s) { delete s; }

const char* sectx_last_error(void) { return g_last_error.c_str(); }

int sectx_check(sectx_scenario* s, char** out_json) {
  return guarded(out_json, [&](json& report) {
    txdsl::Context ctx = scenario::make_context(*s->scn);
    report = {{"scenario", s->scn->name}, {"programs", json::array()}};
    bool clean = true;
    for (const auto& def : s->scn->programs) {
      json p = check_program(def, ctx, s->scn->label_vars);
      clean = clean && p["violations"].empty();
      report["programs"].push_back(std::move(p));
    }
    return clean ? SECTX_OK : SECTX_VIOLATIONS;
  });
}

int sectx_run(sectx_scenario* s, const char* protocol, const char* variant,
              uint64_t seed, int include_trace, int include_metrics,
              char** out_json) {
  return guarded(out_json, [&](json& report) {
    auto kind = pick_protocol(*s->scn, protocol);
    auto scn = s->scn;
    std::string v = variant ? variant : "";
    if (!v.empty()) {
      scn = std::make_shared<const scenario::Scenario>(
          scenario::apply_variant(*scn, v));
    }
    report = {{"scenario", scn->name},
              {"protocol", netsim::protocol_name(kind)},
              {"seed", seed},
              {"variant", v}};
    try {
      netsim::World w(scn, kind, seed);
      bool quiescent = w.run_to_quiescence(netsim::default_max_steps());

      auto txns = w.transactions();
      std::vector<model::Transaction> committed;
      json phases = json::object();
      for (const auto& t : txns) {
        const auto& rt = w.txns_.at(t.id);
        phases[t.id] = static_cast<int>(rt.phase);
        if (rt.phase == netsim::TxnPhase::Committed) committed.push_back(t);
      }
      bool serializable = model::is_serializable(w.state(), committed);
      bool acyclic = model::conflict_graph_acyclic(w.state(), committed);

      // Abort notifications may only land where their conflict label has a
      // principal; a violation is the abort channel.
      json confinement = json::array();
      for (const auto& e : w.state().events()) {
        if (e.kind != model::EventKind::Abort || !e.cl) continue;
        const auto* loc = scn->find_location(e.location);
        bool hosted = false;
        for (const auto& p : e.cl->principals()) {
          hosted = hosted || (loc && loc->principals.count(p));
        }
        if (!hosted) {
          confinement.push_back({{"event", e.key},
                                 {"location", e.location},
                                 {"conflict_label", e.cl->str()}});
        }
      }

      report["quiescent"] = quiescent;
      report["all_committed"] = w.all_committed();
      report["phases"] = phases;
      report["serializable"] = serializable;
      report["conflict_graph_acyclic"] = acyclic;
      report["abort_confinement_violations"] = confinement;
      if (include_metrics) {
        report["metrics"] = {
            {"commits", w.metrics().commits},
            {"stages_precommitted", w.metrics().stages_precommitted},
            {"prepare_round_trips", w.metrics().prepare_round_trips},
            {"aborts_by_observer_label", w.metrics().aborts_by_observer_label}};
      }
      if (include_trace) report["trace"] = w.trace();

      bool clean =
          quiescent && serializable && acyclic && confinement.empty();
      return clean ? SECTX_OK : SECTX_VIOLATIONS;
    } catch (const netsim::ProtocolRefusal& e) {
      report["refused"] = {{"kind", e.kind}, {"detail", e.what()}};
      return SECTX_VIOLATIONS;
    }
  });
}

int sectx_attack_demo(sectx_scenario* s, const char* protocol,
                      const char* attacker, int trials, char** out_json) {
  return guarded(out_json, [&](json& report) {
    auto kind = pick_protocol(*s->scn, protocol);
    auto r = sectest::abort_channel_probe(
        s->scn, kind, attacker ? attacker : "", trials);
    report = r.to_json();
    return r.per_seed_identical ? SECTX_OK : SECTX_VIOLATIONS;
  });
}

int sectx_rod(sectx_scenario* s, const char* protocol, const char* observer,
              int seeds, char** out_json) {
  return guarded(out_json, [&](json& report) {
    auto kind = pick_protocol(*s->scn, protocol);
    std::vector<std::string> variants;
    for (const auto& [name, overrides] : s->scn->variants) {
      variants.push_back(name);
    }
    auto r = sectest::rod_check(s->scn, kind,
                                sectest::observer_label(observer ? observer : ""),
                                variants, seeds);
    report = r.to_json();
    return r.pass ? SECTX_OK : SECTX_VIOLATIONS;
  });
}

int sectx_explore(sectx_scenario* s, const char* protocol, int bound,
                  char** out_json) {
  return guarded(out_json, [&](json& report) {
    if (!s->scn->raw_transactions.empty()) {
      auto r = sectest::impossibility_demo(*s->scn, bound);
      report = r.to_json();
      return r.confirmed() ? SECTX_OK : SECTX_VIOLATIONS;
    }

    auto kind = pick_protocol(*s->scn, protocol);
    explore::Options opts;
    if (bound > 0) opts.max_nies_per_txn = bound;
    explore::Explorer ex(s->scn, kind, opts);
    ex.explore();

    json valences = json::array();
    const auto& txns = ex.txns();
    for (size_t i = 0; i < txns.size(); i++) {
      for (size_t j = i + 1; j < txns.size(); j++) {
        const char* name = "unordered";
        switch (ex.classify_valence(ex.root(), static_cast<int>(i),
                                    static_cast<int>(j))) {
          case explore::Valence::Bivalent: name = "bivalent"; break;
          case explore::Valence::UnivalentFirst:
          case explore::Valence::UnivalentSecond: name = "univalent"; break;
          case explore::Valence::Unordered: name = "unordered"; break;
        }
        valences.push_back(
            {{"first", txns[i]}, {"second", txns[j]}, {"root", name}});
      }
    }
    auto nec = ex.check_necessary_conditions();
    auto dl = ex.check_deadlock_freedom();
    report = {{"scenario", s->scn->name},
              {"protocol", netsim::protocol_name(kind)},
              {"bound", opts.max_nies_per_txn},
              {"states", ex.nodes().size()},
              {"terminals", ex.terminals().size()},
              {"root_valence", valences},
              {"necessary_conditions",
               {{"ok", nec.ok}, {"violations", nec.violations}}},
              {"deadlock_free",
               {{"ok", dl.deadlock_free}, {"problems", dl.problems}}}};
    return nec.ok && dl.deadlock_free ? SECTX_OK : SECTX_VIOLATIONS;
  });
}

void sectx_string_free(char* s) { std::free(s); }

}  // extern "C"
